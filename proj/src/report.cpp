#include "report.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>

namespace oqwalk {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string fnv1a_digest(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

bool Report::ok() const {
  for (const auto& r : rows)
    if (r.checked && !r.pass) return false;
  return true;
}

int Report::checked_count() const {
  int n = 0;
  for (const auto& r : rows) n += r.checked ? 1 : 0;
  return n;
}

int Report::failed_count() const {
  int n = 0;
  for (const auto& r : rows) n += (r.checked && !r.pass) ? 1 : 0;
  return n;
}

void Report::info(const std::string& quantity, const std::string& value,
                  const std::string& provenance, const std::string& note) {
  rows.push_back({quantity, value, "", provenance, false, true, note});
}

void Report::info(const std::string& quantity, double value, const std::string& provenance,
                  const std::string& note) {
  info(quantity, format_number(value), provenance, note);
}

void Report::value(const std::string& quantity, double value, double tolerance,
                   const std::string& provenance, const std::string& note) {
  rows.push_back(
      {quantity, format_number(value), format_number(tolerance), provenance, false, true, note});
}

void Report::check(const std::string& quantity, double value, double tolerance,
                   const std::string& provenance, bool pass, const std::string& note) {
  rows.push_back(
      {quantity, format_number(value), format_number(tolerance), provenance, true, pass, note});
}

void Report::check_abs(const std::string& quantity, double value, double tolerance,
                       const std::string& provenance, const std::string& note) {
  check(quantity, value, tolerance, provenance, std::abs(value) <= tolerance, note);
}

std::string Report::csv() const {
  std::string out = "quantity,value,tolerance,provenance\n";
  for (const auto& r : rows) {
    out += r.quantity;
    out += ',';
    out += r.value;
    out += ',';
    out += r.tolerance;
    out += ',';
    out += r.provenance;
    out += '\n';
  }
  return out;
}

std::string Report::human() const {
  std::ostringstream os;
  os << "# " << command << "\n";
  if (!input_path.empty()) os << "# input " << input_path << " digest " << input_digest << "\n";
  size_t qw = 8, vw = 5;
  for (const auto& r : rows) {
    qw = std::max(qw, r.quantity.size());
    vw = std::max(vw, r.value.size());
  }
  for (const auto& r : rows) {
    os << r.quantity << std::string(qw - r.quantity.size() + 2, ' ') << r.value
       << std::string(vw - r.value.size() + 2, ' ');
    if (!r.tolerance.empty()) os << "tol " << r.tolerance << "  ";
    os << r.provenance;
    if (r.checked) os << (r.pass ? "  PASS" : "  FAIL");
    if (!r.note.empty()) os << "  (" << r.note << ")";
    os << "\n";
  }
  const int nc = checked_count(), nf = failed_count();
  if (nc > 0) {
    if (nf == 0)
      os << "verdict: PASS (" << nc << (nc == 1 ? " check)\n" : " checks)\n");
    else
      os << "verdict: FAIL (" << nf << " of " << nc << " checks failed)\n";
  }
  return os.str();
}

}  // namespace oqwalk
