#ifndef OQW_SRC_REPORT_HPP
#define OQW_SRC_REPORT_HPP

#include <string>
#include <vector>

namespace oqwalk {

// One line of a command report.  `value`, `tolerance` and `provenance` are
// preformatted strings so the CSV emitter stays a dumb join; `checked` rows
// feed the verdict and the exit code, informational rows do not.
struct ReportRow {
  std::string quantity;
  std::string value;
  std::string tolerance;   // empty when no tolerance applies
  std::string provenance;  // analytic | extrapolated | monte_carlo | enumeration | input
  bool checked = false;
  bool pass = true;
  std::string note;  // human output only, never in the CSV
};

struct Report {
  std::string command;       // echo of the invocation
  std::string input_path;
  std::string input_digest;  // fnv1a-64 over the raw model file bytes
  std::vector<ReportRow> rows;

  bool ok() const;
  int checked_count() const;
  int failed_count() const;

  void info(const std::string& quantity, const std::string& value,
            const std::string& provenance, const std::string& note = "");
  void info(const std::string& quantity, double value, const std::string& provenance,
            const std::string& note = "");
  void value(const std::string& quantity, double value, double tolerance,
             const std::string& provenance, const std::string& note = "");
  void check(const std::string& quantity, double value, double tolerance,
             const std::string& provenance, bool pass, const std::string& note = "");
  // Convenience: pass iff |value| <= tolerance.
  void check_abs(const std::string& quantity, double value, double tolerance,
                 const std::string& provenance, const std::string& note = "");

  std::string csv() const;    // stable machine output, header + rows
  std::string human() const;  // aligned table with verdict line
};

// Shortest %.12g rendering with canonical "inf"/"-inf"/"nan" spellings.
std::string format_number(double v);

// FNV-1a 64-bit over raw bytes, rendered as 16 lowercase hex digits.
std::string fnv1a_digest(const std::string& bytes);

}  // namespace oqwalk

#endif
