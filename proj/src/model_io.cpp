#include "model_io.hpp"

#include <Eigen/Eigenvalues>

#include <fstream>
#include <set>
#include <sstream>

namespace oqwalk {

using nlohmann::json;

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::oqw: return "oqw";
    case ModelKind::stochastic: return "stochastic";
    case ModelKind::qmatrix: return "qmatrix";
    case ModelKind::graph: return "graph";
  }
  return "oqw";
}

ModelKind model_kind_from(const std::string& name) {
  if (name == "oqw") return ModelKind::oqw;
  if (name == "stochastic") return ModelKind::stochastic;
  if (name == "qmatrix") return ModelKind::qmatrix;
  if (name == "graph") return ModelKind::graph;
  throw model_error("unknown model kind '" + name +
                    "' (expected oqw, stochastic, qmatrix or graph)");
}

namespace {

// Line/column of a byte offset, for parse diagnostics.
std::pair<int, int> line_column(const std::string& text, size_t byte) {
  int line = 1, col = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

int require_int(const json& j, const std::string& field) {
  if (!j.is_number_integer())
    throw model_error("field '" + field + "' must be an integer");
  return j.get<int>();
}

// "to,from" with 1-based labels -> 0-based pair.
std::pair<int, int> parse_block_key(const std::string& key, int sites) {
  const auto comma = key.find(',');
  if (comma == std::string::npos || comma == 0 || comma + 1 == key.size())
    throw model_error("block key '" + key + "' must look like \"to,from\"");
  int to = 0, from = 0;
  try {
    size_t used = 0;
    to = std::stoi(key.substr(0, comma), &used);
    if (used != comma) throw std::invalid_argument(key);
    from = std::stoi(key.substr(comma + 1), &used);
    if (used != key.size() - comma - 1) throw std::invalid_argument(key);
  } catch (const std::exception&) {
    throw model_error("block key '" + key + "' must be two integers \"to,from\"");
  }
  if (to < 1 || to > sites || from < 1 || from > sites)
    throw model_error("block key '" + key + "' out of range 1.." + std::to_string(sites));
  return {to - 1, from - 1};
}

Mat<double> parse_matrix(const json& j, int dim, const std::string& what) {
  if (!j.is_array() || int(j.size()) != dim)
    throw model_error(what + " must be an array of " + std::to_string(dim) + " rows");
  Mat<double> m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    const json& row = j[size_t(r)];
    if (!row.is_array() || int(row.size()) != dim)
      throw model_error(what + " row " + std::to_string(r + 1) + " must have " +
                        std::to_string(dim) + " entries");
    for (int c = 0; c < dim; ++c) {
      const json& e = row[size_t(c)];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        throw model_error(what + " entry (" + std::to_string(r + 1) + "," +
                          std::to_string(c + 1) + ") must be a [re, im] pair");
      m(r, c) = Cx<double>(e[0].get<double>(), e[1].get<double>());
    }
  }
  return m;
}

json dump_matrix(const Mat<double>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(json::array({m(r, c).real(), m(r, c).imag()}));
    rows.push_back(std::move(row));
  }
  return rows;
}

void require_density(const Mat<double>& rho, const std::string& what) {
  const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (herm > 1e-12) throw model_error(what + " is not Hermitian");
  if (std::abs(rho.trace().real() - 1.0) > 1e-10 || std::abs(rho.trace().imag()) > 1e-12)
    throw model_error(what + " must have unit trace");
  Eigen::SelfAdjointEigenSolver<Mat<double>> es(rho);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw model_error(what + " is not positive semidefinite");
}

}  // namespace

ModelFile parse_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw model_error("parse error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  if (!j.is_object()) throw model_error("model file must be a JSON object");

  static const std::set<std::string> known = {"format_version", "kind",      "sites",
                                              "internal_dim",   "blocks",    "generator",
                                              "states",         "checks"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw model_error("unknown field '" + key + "'");
  for (const char* req : {"format_version", "kind", "sites", "internal_dim", "blocks"})
    if (!j.contains(req)) throw model_error(std::string("missing field '") + req + "'");

  ModelFile mf;
  mf.format_version = require_int(j["format_version"], "format_version");
  if (mf.format_version != 1)
    throw model_error("unsupported format_version " + std::to_string(mf.format_version));
  if (!j["kind"].is_string()) throw model_error("field 'kind' must be a string");
  mf.kind = model_kind_from(j["kind"].get<std::string>());
  mf.sites = require_int(j["sites"], "sites");
  if (mf.sites < 1) throw model_error("sites must be >= 1");
  mf.internal_dim = require_int(j["internal_dim"], "internal_dim");
  if (mf.internal_dim < 1) throw model_error("internal_dim must be >= 1");
  if (mf.kind != ModelKind::oqw && mf.internal_dim != 1)
    throw model_error("kind '" + to_string(mf.kind) + "' requires internal_dim = 1");

  if (!j["blocks"].is_object()) throw model_error("field 'blocks' must be an object");
  for (const auto& [key, val] : j["blocks"].items()) {
    const auto idx = parse_block_key(key, mf.sites);
    mf.blocks[idx] = parse_matrix(val, mf.internal_dim, "block \"" + key + "\"");
  }

  if (j.contains("generator")) {
    if (!j["generator"].is_string()) throw model_error("field 'generator' must be a string");
    mf.generator = j["generator"].get<std::string>();
    const bool walk_kind = mf.kind == ModelKind::oqw || mf.kind == ModelKind::stochastic;
    if (mf.generator == "phi_minus_identity") {
      if (!walk_kind)
        throw model_error("generator 'phi_minus_identity' needs kind oqw or stochastic");
    } else if (mf.generator == "graph_induced") {
      if (mf.kind != ModelKind::graph)
        throw model_error("generator 'graph_induced' needs kind graph");
    } else if (mf.generator == "classical_q") {
      if (mf.kind != ModelKind::qmatrix)
        throw model_error("generator 'classical_q' needs kind qmatrix");
    } else {
      throw model_error("unknown generator directive '" + mf.generator + "'");
    }
  }

  if (j.contains("states")) {
    if (!j["states"].is_object()) throw model_error("field 'states' must be an object");
    for (const auto& [name, val] : j["states"].items()) {
      Mat<double> rho = parse_matrix(val, mf.internal_dim, "state \"" + name + "\"");
      require_density(rho, "state \"" + name + "\"");
      mf.states[name] = std::move(rho);
    }
  }

  if (j.contains("checks")) {
    if (!j["checks"].is_array()) throw model_error("field 'checks' must be an array");
    mf.checks = j["checks"];
  }
  return mf;
}

ModelFile load_model(const std::string& path, std::string* raw_bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw model_error("cannot open model file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (raw_bytes) *raw_bytes = text;
  try {
    return parse_model(text);
  } catch (const model_error& e) {
    throw model_error(path + ": " + e.what());
  }
}

std::string serialize_model(const ModelFile& mf) {
  json j;
  j["format_version"] = mf.format_version;
  j["kind"] = to_string(mf.kind);
  j["sites"] = mf.sites;
  j["internal_dim"] = mf.internal_dim;
  json blocks = json::object();
  for (const auto& [idx, m] : mf.blocks) {
    const std::string key =
        std::to_string(idx.first + 1) + "," + std::to_string(idx.second + 1);
    blocks[key] = dump_matrix(m);
  }
  j["blocks"] = std::move(blocks);
  if (!mf.generator.empty()) j["generator"] = mf.generator;
  if (!mf.states.empty()) {
    json states = json::object();
    for (const auto& [name, m] : mf.states) states[name] = dump_matrix(m);
    j["states"] = std::move(states);
  }
  if (!mf.checks.empty()) j["checks"] = mf.checks;
  return j.dump(2) + "\n";
}

Mat<double> block_or_zero(const ModelFile& mf, int to, int from) {
  const auto it = mf.blocks.find({to, from});
  if (it != mf.blocks.end()) return it->second;
  return Mat<double>::Zero(mf.internal_dim, mf.internal_dim);
}

RMat<double> scalar_matrix(const ModelFile& mf) {
  RMat<double> m = RMat<double>::Zero(mf.sites, mf.sites);
  for (const auto& [idx, b] : mf.blocks) {
    if (std::abs(b(0, 0).imag()) > 0)
      throw model_error("kind '" + to_string(mf.kind) + "' requires real entries");
    m(idx.first, idx.second) = b(0, 0).real();
  }
  return m;
}

WalkModel<double> to_walk(const ModelFile& mf) {
  if (mf.kind == ModelKind::oqw) {
    WalkModel<double> w(mf.sites, mf.internal_dim);
    for (const auto& [idx, b] : mf.blocks) w.block(idx.first, idx.second) = b;
    return w;
  }
  if (mf.kind == ModelKind::stochastic) {
    try {
      return embed_classical<double>(scalar_matrix(mf));
    } catch (const std::invalid_argument& e) {
      throw model_error(e.what());
    }
  }
  throw model_error("kind '" + to_string(mf.kind) + "' does not define a discrete walk");
}

bool has_generator(const ModelFile& mf) {
  return mf.kind == ModelKind::qmatrix || mf.kind == ModelKind::graph ||
         !mf.generator.empty();
}

GeneratorModel<double> to_generator(const ModelFile& mf) {
  try {
    if (mf.kind == ModelKind::qmatrix) return generator_from_qmatrix<double>(scalar_matrix(mf));
    if (mf.kind == ModelKind::graph) {
      const RMat<double> a = scalar_matrix(mf);
      Eigen::MatrixXi adj(mf.sites, mf.sites);
      for (int r = 0; r < mf.sites; ++r)
        for (int c = 0; c < mf.sites; ++c) {
          const double v = a(r, c);
          if (v != 0.0 && v != 1.0)
            throw model_error("graph adjacency entries must be 0 or 1");
          adj(r, c) = int(v);
        }
      return generator_from_graph<double>(adj);
    }
    if (mf.generator == "phi_minus_identity")
      return generator_from_walk<double>(to_walk(mf));
  } catch (const std::invalid_argument& e) {
    throw model_error(e.what());
  }
  throw model_error("model has no continuous-time generator (add a generator directive)");
}

Mat<double> named_state(const ModelFile& mf, const std::string& name) {
  const int n = mf.internal_dim;
  if (name.empty() || name == "maximally-mixed")
    return Mat<double>::Identity(n, n) / double(n);
  const auto it = mf.states.find(name);
  if (it == mf.states.end()) throw model_error("unknown state name '" + name + "'");
  return it->second;
}

}  // namespace oqwalk
