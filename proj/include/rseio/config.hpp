#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rseio/errors.hpp"
#include "rseio/estimator.hpp"
#include "rseio/linalg.hpp"
#include "rseio/montecarlo.hpp"
#include "rseio/plant.hpp"

namespace rseio {

using Json = nlohmann::json;

/// Round-trip-safe decimal rendering for all emitted floating point values.
inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

/// FNV-1a 64-bit over the canonical serialized config, as 16 hex chars.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline Matrix matrix_from_json(const Json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) throw ConfigError("field '" + name + "' must be a nonempty 2-d array");
  const std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty()) {
    throw ConfigError("field '" + name + "' must be a nonempty 2-d array");
  }
  const std::size_t cols = j[0].size();
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw ConfigError("field '" + name + "' must be rectangular");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ConfigError("field '" + name + "' must contain numbers");
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return out;
}

inline Vector vector_from_json(const Json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) throw ConfigError("field '" + name + "' must be a nonempty array");
  Vector out(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError("field '" + name + "' must contain numbers");
    out(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return out;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

namespace detail {

inline const Json& require_field(const Json& j, const std::string& key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing config field '" + key + "'");
  return j.at(key);
}

inline PlantStage stage_from_json(const Json& sj, const std::string& where) {
  PlantStage st;
  st.a = matrix_from_json(require_field(sj, "a"), where + ".a");
  st.b = matrix_from_json(require_field(sj, "b"), where + ".b");
  st.c = matrix_from_json(require_field(sj, "c"), where + ".c");
  st.q = matrix_from_json(require_field(sj, "q"), where + ".q");
  st.r = matrix_from_json(require_field(sj, "r"), where + ".r");
  auto jac = [&](const char* key, std::vector<Matrix>& out) {
    if (!sj.contains(key)) return;
    const Json& arr = sj.at(key);
    if (!arr.is_array()) throw ConfigError("field '" + where + "." + key + "' must be an array of matrices");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      out.push_back(matrix_from_json(arr[k], where + "." + key + "[" + std::to_string(k) + "]"));
    }
  };
  jac("da", st.da);
  jac("db", st.db);
  jac("dc", st.dc);
  return st;
}

/// Pads absent jacobian families with zeros so any subset may be specified.
inline void fill_missing_jacobians(PlantStage& st, int n, int m, int p, int n_e) {
  if (st.da.empty()) st.da.assign(static_cast<std::size_t>(n_e), Matrix::Zero(n, n));
  if (st.db.empty()) st.db.assign(static_cast<std::size_t>(n_e), Matrix::Zero(n, m));
  if (st.dc.empty()) st.dc.assign(static_cast<std::size_t>(n_e), Matrix::Zero(p, n));
}

}  // namespace detail

inline PlantModel plant_from_json(const Json& pj) {
  if (!pj.is_object()) throw ConfigError("'plant' must be an object");
  PlantModel model;
  if (pj.contains("preset")) {
    const std::string name = pj.at("preset").is_string() ? pj.at("preset").get<std::string>() : "";
    if (name != "benchmark") throw ConfigError("unknown plant preset '" + name + "'");
    model = make_benchmark_plant(pj.contains("mu") && pj.at("mu").is_number()
                                     ? pj.at("mu").get<double>()
                                     : 0.8);
    return model;
  }
  if (pj.contains("stages")) {
    const Json& arr = pj.at("stages");
    if (!arr.is_array() || arr.empty()) throw ConfigError("'plant.stages' must be a nonempty array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      model.stages.push_back(detail::stage_from_json(arr[i], "plant.stages[" + std::to_string(i) + "]"));
    }
  } else {
    model.stages.push_back(detail::stage_from_json(pj, "plant"));
  }
  const Json& mu_j = detail::require_field(pj, "mu");
  if (mu_j.is_number()) {
    model.mu.push_back(mu_j.get<double>());
  } else if (mu_j.is_array()) {
    for (const auto& v : mu_j) {
      if (!v.is_number()) throw ConfigError("'plant.mu' must contain numbers");
      model.mu.push_back(v.get<double>());
    }
  } else {
    throw ConfigError("'plant.mu' must be a number or an array of numbers");
  }
  model.x0_mean = vector_from_json(detail::require_field(pj, "x0_mean"), "plant.x0_mean");
  model.p0 = matrix_from_json(detail::require_field(pj, "p0"), "plant.p0");
  const PlantStage& first = model.stages.front();
  model.n = static_cast<int>(first.a.rows());
  model.m = static_cast<int>(first.b.cols());
  model.p = static_cast<int>(first.c.rows());
  int n_e = 0;
  for (const auto& st : model.stages) {
    n_e = std::max(n_e, static_cast<int>(std::max({st.da.size(), st.db.size(), st.dc.size()})));
  }
  model.n_e = n_e;
  for (auto& st : model.stages) detail::fill_missing_jacobians(st, model.n, model.m, model.p, n_e);
  model.normalize_and_validate();
  return model;
}

inline Json plant_to_json(const PlantModel& model) {
  Json pj = Json::object();
  auto stage_json = [](const PlantStage& st) {
    Json sj = Json::object();
    sj["a"] = matrix_to_json(st.a);
    sj["b"] = matrix_to_json(st.b);
    sj["c"] = matrix_to_json(st.c);
    sj["q"] = matrix_to_json(st.q);
    sj["r"] = matrix_to_json(st.r);
    Json da = Json::array(), db = Json::array(), dc = Json::array();
    for (const auto& m : st.da) da.push_back(matrix_to_json(m));
    for (const auto& m : st.db) db.push_back(matrix_to_json(m));
    for (const auto& m : st.dc) dc.push_back(matrix_to_json(m));
    sj["da"] = std::move(da);
    sj["db"] = std::move(db);
    sj["dc"] = std::move(dc);
    return sj;
  };
  if (model.stages.size() == 1) {
    pj = stage_json(model.stages.front());
  } else {
    Json arr = Json::array();
    for (const auto& st : model.stages) arr.push_back(stage_json(st));
    pj["stages"] = std::move(arr);
  }
  if (model.mu.size() == 1) {
    pj["mu"] = model.mu.front();
  } else {
    pj["mu"] = Json(model.mu);
  }
  pj["x0_mean"] = vector_to_json(model.x0_mean);
  pj["p0"] = matrix_to_json(model.p0);
  return pj;
}

inline DropoutModel channel_from_json(const Json& cj) {
  if (!cj.is_object()) throw ConfigError("'channel' must be an object");
  const Json& kind = detail::require_field(cj, "kind");
  if (!kind.is_string()) throw ConfigError("'channel.kind' must be a string");
  const std::string name = kind.get<std::string>();
  auto num = [&](const char* key) {
    const Json& v = detail::require_field(cj, key);
    if (!v.is_number()) throw ConfigError(std::string("'channel.") + key + "' must be a number");
    return v.get<double>();
  };
  if (name == "bernoulli") {
    DropoutModel model = DropoutModel::bernoulli(num("gamma"));
    model.validate();
    return model;
  }
  if (name == "markov") {
    DropoutModel model = DropoutModel::markov(num("alpha"), num("beta"), num("gamma0"));
    model.validate();
    return model;
  }
  throw ConfigError("unknown channel kind '" + name + "'");
}

inline Json channel_to_json(const DropoutModel& model) {
  Json cj = Json::object();
  if (model.kind == DropoutModel::Kind::bernoulli) {
    cj["kind"] = "bernoulli";
    cj["gamma"] = model.gamma_bar;
  } else {
    cj["kind"] = "markov";
    cj["alpha"] = model.alpha;
    cj["beta"] = model.beta;
    cj["gamma0"] = model.gamma0_bar;
  }
  return cj;
}

/// Canonical JSON form of a config. Thread count and label are execution
/// details, not semantics, so they are left out (two runs differing only in
/// those hash identically).
inline Json config_to_json(const SimConfig& config) {
  Json j = Json::object();
  j["plant"] = plant_to_json(config.plant);
  j["channel"] = channel_to_json(config.channel);
  j["delta"] = config.delta;
  j["horizon"] = config.horizon;
  j["trials"] = config.trials;
  Json est = Json::array();
  for (EstimatorKind kind : config.estimators) est.push_back(estimator_name(kind));
  j["estimators"] = std::move(est);
  Json p0s = Json::array();
  for (const auto& p0 : config.p0_list) p0s.push_back(matrix_to_json(p0));
  j["p0_list"] = std::move(p0s);
  j["seed"] = config.seed;
  return j;
}

inline std::string config_hash(const SimConfig& config) {
  return fnv1a_hex(config_to_json(config).dump());
}

inline SimConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  SimConfig config;
  config.plant = plant_from_json(detail::require_field(j, "plant"));
  config.channel = channel_from_json(detail::require_field(j, "channel"));
  if (j.contains("delta")) {
    if (!j.at("delta").is_number()) throw ConfigError("'delta' must be a number");
    config.delta = j.at("delta").get<double>();
  }
  if (j.contains("horizon")) {
    if (!j.at("horizon").is_number_integer()) throw ConfigError("'horizon' must be an integer");
    config.horizon = j.at("horizon").get<int>();
  }
  if (j.contains("trials")) {
    if (!j.at("trials").is_number_integer()) throw ConfigError("'trials' must be an integer");
    config.trials = j.at("trials").get<int>();
  }
  if (j.contains("estimators")) {
    const Json& est = j.at("estimators");
    if (!est.is_array()) throw ConfigError("'estimators' must be an array of names");
    for (const auto& e : est) {
      if (!e.is_string()) throw ConfigError("'estimators' must be an array of names");
      config.estimators.push_back(estimator_kind_from_name(e.get<std::string>()));
    }
  }
  if (j.contains("p0_list")) {
    const Json& lst = j.at("p0_list");
    if (!lst.is_array()) throw ConfigError("'p0_list' must be an array");
    for (std::size_t i = 0; i < lst.size(); ++i) {
      if (lst[i].is_number()) {
        config.p0_list.push_back(lst[i].get<double>() *
                                 Matrix::Identity(config.plant.n, config.plant.n));
      } else {
        config.p0_list.push_back(matrix_from_json(lst[i], "p0_list[" + std::to_string(i) + "]"));
      }
    }
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer() && !j.at("seed").is_number_unsigned()) {
      throw ConfigError("'seed' must be an unsigned integer");
    }
    config.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("threads")) {
    if (!j.at("threads").is_number_integer()) throw ConfigError("'threads' must be an integer");
    config.threads = j.at("threads").get<int>();
  }
  if (j.contains("label")) {
    if (!j.at("label").is_string()) throw ConfigError("'label' must be a string");
    config.label = j.at("label").get<std::string>();
  }
  config.validate();
  return config;
}

inline std::vector<std::string> preset_names() {
  return {"paper-fig1a", "paper-fig1b", "paper-fig1c", "paper-fig1d",
          "paper-fig1e", "paper-fig1f", "paper-fig2"};
}

/// Built-in experiment configurations matching the benchmark studies. The
/// fig1 letter pairs differ only in the plotted window downstream, so each
/// pair shares one configuration.
inline SimConfig preset_config(const std::string& name) {
  SimConfig config;
  config.horizon = 500;
  config.trials = 500;
  config.seed = 1;
  config.label = name;
  config.channel = DropoutModel::bernoulli(0.8);
  const std::vector<EstimatorKind> all_kinds = {EstimatorKind::rseio, EstimatorKind::kfio,
                                                EstimatorKind::kf_ignore_gamma,
                                                EstimatorKind::rse_ignore_gamma};
  if (name == "paper-fig1a" || name == "paper-fig1b") {
    config.plant = make_benchmark_plant(0.8);
    config.delta = 1.0;
    config.estimators = all_kinds;
  } else if (name == "paper-fig1c" || name == "paper-fig1d") {
    config.plant = make_benchmark_plant(0.95);
    config.delta = 1.0;
    config.estimators = all_kinds;
  } else if (name == "paper-fig1e" || name == "paper-fig1f") {
    config.plant = make_benchmark_plant(0.8);
    config.delta = 10.0;
    config.estimators = all_kinds;
  } else if (name == "paper-fig2") {
    config.plant = make_benchmark_plant(0.8);
    config.delta = 10.0;
    config.trials = 1000;
    for (double s : {0.1, 1.0, 10.0, 100.0}) {
      config.p0_list.push_back(s * Matrix::Identity(config.plant.n, config.plant.n));
    }
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  config.validate();
  return config;
}

inline SimConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("config parse failure in '" + path + "': " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const Json::exception& e) {
    throw ConfigError("config schema failure in '" + path + "': " + e.what());
  }
}

namespace detail {

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  return out;
}

inline void provenance_comment(std::ofstream& out, const SimReport& report) {
  out << "# config_hash=" << (report.config_hash.empty() ? "none" : report.config_hash)
      << " seed=" << report.master_seed << "\n";
}

}  // namespace detail

inline void write_mse_csv(const std::string& path, const SimReport& report) {
  auto out = detail::open_output(path);
  detail::provenance_comment(out, report);
  out << "t";
  for (const auto& name : report.estimator_names) out << "," << name;
  out << "\n";
  for (int t = 0; t <= report.horizon; ++t) {
    out << t;
    for (const auto& curve : report.mse) out << "," << fmt_g17(curve[static_cast<std::size_t>(t)]);
    out << "\n";
  }
  if (!out) throw ConfigError("write failure on '" + path + "'");
}

inline void write_pcm_samples_csv(const std::string& path, const SimReport& report) {
  auto out = detail::open_output(path);
  detail::provenance_comment(out, report);
  out << "p0_index,trial";
  for (const auto& label : report.element_labels) out << "," << label;
  out << "\n";
  for (std::size_t i = 0; i < report.pcm_studies.size(); ++i) {
    const auto& study = report.pcm_studies[i];
    for (int j = 0; j < report.trials; ++j) {
      out << i << "," << j;
      for (const auto& samples : study.samples) {
        out << "," << fmt_g17(samples[static_cast<std::size_t>(j)]);
      }
      out << "\n";
    }
  }
  if (!out) throw ConfigError("write failure on '" + path + "'");
}

inline void write_epdf_csv(const std::string& path, const SimReport& report) {
  auto out = detail::open_output(path);
  detail::provenance_comment(out, report);
  out << "p0_index,element,grid,density\n";
  for (std::size_t i = 0; i < report.pcm_studies.size(); ++i) {
    const auto& study = report.pcm_studies[i];
    for (std::size_t k = 0; k < study.samples.size(); ++k) {
      const EpdfCurve curve = default_epdf(study.samples[k]);
      for (std::size_t g = 0; g < curve.grid.size(); ++g) {
        out << i << "," << report.element_labels[k] << "," << fmt_g17(curve.grid[g]) << ","
            << fmt_g17(curve.density[g]) << "\n";
      }
    }
  }
  if (!out) throw ConfigError("write failure on '" + path + "'");
}

/// Single-realization filter trace: time, arrival flag, state estimate
/// components, PCM upper triangle in row-major order.
inline void write_trace_csv(const std::string& path, const std::vector<EstimatorState>& states,
                            const std::vector<int>& gamma, const SimReport& report) {
  auto out = detail::open_output(path);
  detail::provenance_comment(out, report);
  const int n = states.empty() ? 0 : static_cast<int>(states.front().x_hat.size());
  out << "t,gamma";
  for (int i = 0; i < n; ++i) out << ",x" << (i + 1);
  for (int r = 0; r < n; ++r) {
    for (int c = r; c < n; ++c) out << ",P" << (r + 1) << (c + 1);
  }
  out << "\n";
  for (std::size_t s = 0; s < states.size(); ++s) {
    const int g = s == 0 ? 1 : gamma[s - 1];
    out << states[s].t << "," << g;
    for (int i = 0; i < n; ++i) out << "," << fmt_g17(states[s].x_hat(i));
    for (int r = 0; r < n; ++r) {
      for (int c = r; c < n; ++c) out << "," << fmt_g17(states[s].p_mat(r, c));
    }
    out << "\n";
  }
  if (!out) throw ConfigError("write failure on '" + path + "'");
}

inline Json report_metadata(const SimReport& report) {
  Json meta = Json::object();
  meta["config_hash"] = report.config_hash.empty() ? "none" : report.config_hash;
  meta["seed"] = report.master_seed;
  meta["label"] = report.label;
  meta["horizon"] = report.horizon;
  meta["trials"] = report.trials;
  meta["excluded_trials"] = Json(report.excluded_trials);
  meta["excluded_count"] = report.excluded_trials.size();
  return meta;
}

inline void write_report_json(const std::string& path, const SimReport& report) {
  Json j = Json::object();
  j["metadata"] = report_metadata(report);
  if (!report.estimator_names.empty()) {
    Json avg = Json::object();
    const int lo = std::min(80, report.horizon);
    for (std::size_t e = 0; e < report.estimator_names.size(); ++e) {
      double acc = 0.0;
      for (int t = lo; t <= report.horizon; ++t) acc += report.mse[e][static_cast<std::size_t>(t)];
      avg[report.estimator_names[e]] = acc / static_cast<double>(report.horizon - lo + 1);
    }
    j["estimators"] = Json(report.estimator_names);
    j["time_averaged_mse"] = std::move(avg);
    j["mse_window_start"] = lo;
  }
  if (!report.pcm_studies.empty()) {
    Json study = Json::object();
    study["element_labels"] = Json(report.element_labels);
    Json p0s = Json::array();
    for (const auto& s : report.pcm_studies) p0s.push_back(matrix_to_json(s.p0));
    study["p0_list"] = std::move(p0s);
    Json ks = Json::object();
    for (std::size_t k = 0; k < report.element_labels.size(); ++k) {
      ks[report.element_labels[k]] = matrix_to_json(report.ks_matrices[k]);
    }
    study["ks_matrices"] = std::move(ks);
    j["pcm_study"] = std::move(study);
  }
  auto out = detail::open_output(path);
  out << j.dump(2) << "\n";
  if (!out) throw ConfigError("write failure on '" + path + "'");
}

}  // namespace rseio
