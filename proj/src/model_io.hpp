#ifndef OQW_SRC_MODEL_IO_HPP
#define OQW_SRC_MODEL_IO_HPP

#include <oqw/ctime.hpp>
#include <oqw/walk.hpp>

#include <json.hpp>

#include <map>
#include <stdexcept>
#include <string>
#include <utility>

namespace oqwalk {

// Input-side failure: malformed JSON, schema violation, unknown name.
// The front end maps these to exit code 2.
class model_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { oqw, stochastic, qmatrix, graph };

std::string to_string(ModelKind k);
ModelKind model_kind_from(const std::string& name);

// In-memory form of a model file.  Site labels are 1-based in the file and
// on the command line (matching how the bundled examples are usually
// written up); everything in this struct is already 0-based.
struct ModelFile {
  int format_version = 1;
  ModelKind kind = ModelKind::oqw;
  int sites = 0;
  int internal_dim = 1;
  std::map<std::pair<int, int>, Mat<double>> blocks;  // (to, from)
  std::string generator;                              // optional directive
  std::map<std::string, Mat<double>> states;          // named initial densities
  nlohmann::json checks = nlohmann::json::array();    // declared check-all entries
};

ModelFile parse_model(const std::string& text);
// Reads and parses; optionally hands back the raw bytes for digesting.
ModelFile load_model(const std::string& path, std::string* raw_bytes = nullptr);
// Canonical JSON rendering; parse(serialize(parse(text))) reproduces the
// same values and the same serialized bytes.
std::string serialize_model(const ModelFile& mf);

Mat<double> block_or_zero(const ModelFile& mf, int to, int from);
// Dense real matrix view of 1x1 blocks (stochastic / qmatrix / graph kinds).
RMat<double> scalar_matrix(const ModelFile& mf);

WalkModel<double> to_walk(const ModelFile& mf);
bool has_generator(const ModelFile& mf);
GeneratorModel<double> to_generator(const ModelFile& mf);
// Resolves a named density; empty name means the maximally mixed state.
Mat<double> named_state(const ModelFile& mf, const std::string& name);

}  // namespace oqwalk

#endif
