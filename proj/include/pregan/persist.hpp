#pragma once

// Checkpoints, line-delimited traces, run reports and attention tables.

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "pregan/fpe.hpp"
#include "pregan/gan.hpp"
#include "pregan/metrics.hpp"

namespace pregan {

using Json = nlohmann::ordered_json;

inline constexpr int kCheckpointVersion = 1;

namespace detail {

// A float stored as the double nearest to its shortest decimal form, so
// the JSON text carries at most 9 significant digits and still reads back
// to the same float.
template <class Real>
double json_number(Real v) {
  if (!std::isfinite(v)) throw DataError("cannot serialize a non-finite value");
  if constexpr (std::is_same_v<Real, float>) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    double d = 0.0;
    std::from_chars(buf, res.ptr, d);
    return d;
  } else {
    return static_cast<double>(v);
  }
}

template <class Real>
Json number_array(std::span<const Real> values) {
  Json a = Json::array();
  for (Real v : values) a.push_back(json_number(v));
  return a;
}

template <class Real>
const char* scalar_name() {
  return std::is_same_v<Real, float> ? "float32" : "float64";
}

inline const Json& require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing key '") + key + "'");
  return j.at(key);
}

template <class T>
T get_as(const Json& j, const char* key) {
  try {
    return require(j, key).get<T>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("key '") + key + "': " + e.what());
  }
}

template <class Real>
Json parameter_json(const Parameter<Real>& p) {
  return Json{{"name", p.name}, {"shape", p.tensor.shape()}, {"values", number_array<Real>(p.tensor.values())}};
}

template <class Real>
void write_parameters(std::ostream& os, const ParameterStore<Real>& store) {
  os << "[";
  const auto& e = store.entries();
  for (std::size_t i = 0; i < e.size(); ++i) os << (i ? ",\n" : "\n") << parameter_json(e[i]).dump();
  os << "\n]";
}

template <class Real>
std::vector<Real> read_values(const Json& values, std::size_t expected, const std::string& what) {
  if (!values.is_array() || values.size() != expected) throw FormatError(what + ": wrong value count");
  std::vector<Real> out;
  out.reserve(expected);
  for (const auto& v : values) {
    if (!v.is_number()) throw FormatError(what + ": non-numeric value");
    out.push_back(static_cast<Real>(v.get<double>()));
  }
  return out;
}

// Overwrites every parameter of `store` from `list`. Names must match one to
// one and shapes exactly.
template <class Real>
void read_parameters(ParameterStore<Real>& store, const Json& list) {
  if (!list.is_array()) throw FormatError("parameters must be an array");
  if (list.size() != store.size()) {
    for (const auto& p : store.entries()) {
      bool found = false;
      for (const auto& j : list) found = found || (j.contains("name") && j["name"] == p.name);
      if (!found) throw FormatError("missing parameter " + p.name);
    }
    throw FormatError("unexpected parameter count");
  }
  std::vector<bool> seen(store.size(), false);
  for (const auto& j : list) {
    const auto name = get_as<std::string>(j, "name");
    auto* p = store.find(name);
    if (p == nullptr) throw FormatError("unexpected parameter " + name);
    const auto idx = static_cast<std::size_t>(p - store.entries().data());
    if (seen[idx]) throw FormatError("duplicate parameter " + name);
    seen[idx] = true;
    const auto shape = get_as<Shape>(j, "shape");
    if (shape != p->tensor.shape()) {
      throw FormatError("shape mismatch for " + name + ": file " + shape_string(shape) + ", model " +
                        shape_string(p->tensor.shape()));
    }
    const auto values = read_values<Real>(require(j, "values"), p->tensor.numel(), name);
    std::copy(values.begin(), values.end(), p->tensor.mutable_values().begin());
  }
}

inline Json fpe_config_json(const FpeConfig& c) {
  return Json{{"k", c.k},         {"n", c.n},         {"c", c.c},
              {"embed", c.embed}, {"hidden", c.hidden}, {"fused", c.fused},
              {"heads", c.heads}, {"ff_hidden", c.ff_hidden}, {"max_containers", c.max_containers}};
}

inline FpeConfig fpe_config_from(const Json& j) {
  FpeConfig c;
  c.k = get_as<std::size_t>(j, "k");
  c.n = get_as<std::size_t>(j, "n");
  c.c = get_as<std::size_t>(j, "c");
  c.embed = get_as<std::size_t>(j, "embed");
  c.hidden = get_as<std::size_t>(j, "hidden");
  c.fused = get_as<std::size_t>(j, "fused");
  c.heads = get_as<std::size_t>(j, "heads");
  c.ff_hidden = get_as<std::size_t>(j, "ff_hidden");
  c.max_containers = get_as<double>(j, "max_containers");
  return c;
}

inline Json gan_config_json(const GanConfig& c) {
  return Json{{"embed", c.embed},
              {"heads", c.heads},
              {"key_width", c.key_width},
              {"disc_hidden", c.disc_hidden},
              {"placement_sharpness", c.placement_sharpness},
              {"max_containers", c.max_containers}};
}

inline GanConfig gan_config_from(const Json& j) {
  GanConfig c;
  c.embed = get_as<std::size_t>(j, "embed");
  c.heads = get_as<std::size_t>(j, "heads");
  c.key_width = get_as<std::size_t>(j, "key_width");
  c.disc_hidden = get_as<std::size_t>(j, "disc_hidden");
  c.placement_sharpness = get_as<double>(j, "placement_sharpness");
  c.max_containers = get_as<double>(j, "max_containers");
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

// Weights only; optimizer moments are not persisted.
template <class Real>
struct Checkpoint {
  std::optional<FpeModel<Real>> fpe;
  PrototypeSet prototypes;
  std::optional<Tensor<Real>> carry;
  std::optional<GanModel<Real>> gan;
};

template <class Real>
std::string checkpoint_text(const Checkpoint<Real>& ck) {
  std::ostringstream os;
  os << "{\n\"format_version\": " << kCheckpointVersion << ",\n\"scalar\": \"" << detail::scalar_name<Real>()
     << "\",\n\"fpe\": ";
  if (ck.fpe) {
    os << "{\"config\": " << detail::fpe_config_json(ck.fpe->cfg).dump() << ",\n\"parameters\": ";
    detail::write_parameters(os, ck.fpe->store);
    os << "}";
  } else {
    os << "null";
  }
  Json protos{{"alpha", ck.prototypes.alpha}, {"epsilon", ck.prototypes.epsilon}, {"vectors", ck.prototypes.vectors}};
  for (const auto& v : ck.prototypes.vectors)
    for (double x : v)
      if (!std::isfinite(x)) throw DataError("cannot serialize a non-finite prototype");
  os << ",\n\"prototypes\": " << protos.dump() << ",\n\"carry\": ";
  if (ck.carry) {
    os << Json{{"shape", ck.carry->shape()}, {"values", detail::number_array<Real>(ck.carry->values())}}.dump();
  } else {
    os << "null";
  }
  os << ",\n\"gan\": ";
  if (ck.gan) {
    os << "{\"config\": " << detail::gan_config_json(ck.gan->cfg).dump() << ",\n\"generator\": ";
    detail::write_parameters(os, ck.gan->generator);
    os << ",\n\"discriminator\": ";
    detail::write_parameters(os, ck.gan->discriminator);
    os << "}";
  } else {
    os << "null";
  }
  os << "\n}\n";
  return os.str();
}

// Builds a complete checkpoint or throws FormatError; nothing partial escapes.
template <class Real>
Checkpoint<Real> parse_checkpoint(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  const int version = detail::get_as<int>(j, "format_version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto scalar = detail::get_as<std::string>(j, "scalar");
  if (scalar != detail::scalar_name<Real>()) throw FormatError("checkpoint scalar type is " + scalar);
  Checkpoint<Real> ck;
  try {
    const auto& fj = detail::require(j, "fpe");
    if (!fj.is_null()) {
      const FpeConfig cfg = detail::fpe_config_from(detail::require(fj, "config"));
      cfg.validate();
      auto model = FpeModel<Real>::create(cfg, 0);
      detail::read_parameters(model.store, detail::require(fj, "parameters"));
      ck.fpe = std::move(model);
    }
    const auto& pj = detail::require(j, "prototypes");
    ck.prototypes.alpha = detail::get_as<double>(pj, "alpha");
    ck.prototypes.epsilon = detail::get_as<double>(pj, "epsilon");
    ck.prototypes.vectors = detail::get_as<std::vector<std::vector<double>>>(pj, "vectors");
    for (const auto& v : ck.prototypes.vectors)
      if (v.size() != ck.prototypes.embed()) throw FormatError("prototype vectors differ in length");
    if (ck.fpe && !ck.prototypes.vectors.empty() &&
        (ck.prototypes.classes() != ck.fpe->cfg.c || ck.prototypes.embed() != ck.fpe->cfg.embed)) {
      throw FormatError("prototype set does not match the encoder");
    }
    const auto& cj = detail::require(j, "carry");
    if (!cj.is_null()) {
      const auto shape = detail::get_as<Shape>(cj, "shape");
      if (shape.size() != 2) throw FormatError("carry must be a matrix");
      if (ck.fpe && shape[1] != ck.fpe->cfg.hidden) throw FormatError("carry width does not match the encoder");
      ck.carry = Tensor<Real>(shape, detail::read_values<Real>(detail::require(cj, "values"), shape_numel(shape), "carry"));
    }
    const auto& gj = detail::require(j, "gan");
    if (!gj.is_null()) {
      const GanConfig cfg = detail::gan_config_from(detail::require(gj, "config"));
      cfg.validate();
      auto gan = GanModel<Real>::create(cfg, 0);
      detail::read_parameters(gan.generator, detail::require(gj, "generator"));
      detail::read_parameters(gan.discriminator, detail::require(gj, "discriminator"));
      ck.gan = std::move(gan);
    }
  } catch (const ParameterError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  return ck;
}

template <class Real>
void save_checkpoint(const std::string& path, const Checkpoint<Real>& ck) {
  const std::string text = checkpoint_text(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
  if (!out) throw FormatError("write failed for " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class Real>
Checkpoint<Real> load_checkpoint(const std::string& path) {
  return parse_checkpoint<Real>(read_file(path));
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

struct TraceEntry {
  IntervalRecord record;
  Schedule schedule;
  std::optional<DecisionRecord> decision;
  std::optional<MetricsWindow> window;  // present in FPE datasets
};

inline Json decision_json(const DecisionRecord& d) {
  return Json{{"interval", d.interval}, {"fault_predicted", d.fault_predicted}, {"d0", d.d0},
              {"d1", d.d1},             {"accepted", d.accepted},               {"migrations", d.migrations}};
}

inline DecisionRecord decision_from(const Json& j) {
  DecisionRecord d;
  d.interval = detail::get_as<std::int64_t>(j, "interval");
  d.fault_predicted = detail::get_as<bool>(j, "fault_predicted");
  d.d0 = detail::get_as<double>(j, "d0");
  d.d1 = detail::get_as<double>(j, "d1");
  d.accepted = detail::get_as<bool>(j, "accepted");
  d.migrations = detail::get_as<std::size_t>(j, "migrations");
  return d;
}

inline Json trace_json(const TraceEntry& e) {
  const auto& r = e.record;
  Json rows = Json::array();
  for (std::size_t t = 0; t < e.schedule.tasks(); ++t) {
    Json row = Json::array();
    for (std::size_t h = 0; h < e.schedule.hosts; ++h) row.push_back(e.schedule.at(t, h));
    rows.push_back(std::move(row));
  }
  Json completed = Json::array();
  for (const auto& c : r.completed) {
    completed.push_back(Json{{"id", c.id},
                             {"app", static_cast<int>(c.app_class)},
                             {"response_time", c.response_time},
                             {"slo_violated", c.slo_violated}});
  }
  Json j{{"interval", r.interval_index},
         {"raw_features", r.raw_features},
         {"task_ids", e.schedule.task_ids},
         {"previous_host", e.schedule.previous_host},
         {"schedule", std::move(rows)},
         {"labels", r.labels},
         {"qos",
          Json{{"energy_wh", r.energy_wh}, {"slo_violations", r.slo_violations()}, {"migrations", r.migration_count}}},
         {"migration_time_s", r.migration_time_s},
         {"running", r.running},
         {"running_at_risk", r.running_at_risk},
         {"completed", std::move(completed)}};
  if (e.decision) j["decision"] = decision_json(*e.decision);
  if (e.window) {
    j["window_shape"] = {e.window->k, e.window->m, e.window->n};
    j["window"] = detail::number_array<float>(e.window->data);
  }
  return j;
}

inline TraceEntry trace_entry_from(const Json& j) {
  TraceEntry e;
  auto& r = e.record;
  r.interval_index = detail::get_as<std::int64_t>(j, "interval");
  r.raw_features = detail::get_as<std::vector<FeatureRow>>(j, "raw_features");
  r.labels = detail::get_as<std::vector<int>>(j, "labels");
  const auto& q = detail::require(j, "qos");
  r.energy_wh = detail::get_as<double>(q, "energy_wh");
  r.migration_count = detail::get_as<std::size_t>(q, "migrations");
  r.migration_time_s = detail::get_as<double>(j, "migration_time_s");
  r.running = detail::get_as<std::size_t>(j, "running");
  r.running_at_risk = detail::get_as<std::size_t>(j, "running_at_risk");
  for (const auto& c : detail::require(j, "completed")) {
    CompletedTask t;
    t.id = detail::get_as<std::int64_t>(c, "id");
    const int app = detail::get_as<int>(c, "app");
    if (app < 0 || app >= static_cast<int>(kAppClasses)) throw FormatError("bad app class");
    t.app_class = static_cast<AppClass>(app);
    t.response_time = detail::get_as<double>(c, "response_time");
    t.slo_violated = detail::get_as<bool>(c, "slo_violated");
    r.completed.push_back(t);
  }
  if (r.slo_violations() != detail::get_as<std::size_t>(q, "slo_violations")) {
    throw FormatError("slo_violations disagrees with the completed list");
  }
  const std::size_t m = r.raw_features.size();
  e.schedule.hosts = m;
  e.schedule.task_ids = detail::get_as<std::vector<std::int64_t>>(j, "task_ids");
  e.schedule.previous_host = detail::get_as<std::vector<int>>(j, "previous_host");
  const auto rows = detail::get_as<std::vector<std::vector<double>>>(j, "schedule");
  if (rows.size() != e.schedule.task_ids.size() || e.schedule.previous_host.size() != rows.size()) {
    throw FormatError("schedule rows disagree with task ids");
  }
  for (const auto& row : rows) {
    if (row.size() != m) throw FormatError("schedule row width differs from host count");
    e.schedule.matrix.insert(e.schedule.matrix.end(), row.begin(), row.end());
  }
  if (r.labels.size() != m) throw FormatError("label count differs from host count");
  if (j.contains("decision")) e.decision = decision_from(j["decision"]);
  if (j.contains("window")) {
    const auto shape = detail::get_as<std::vector<std::size_t>>(j, "window_shape");
    if (shape.size() != 3) throw FormatError("window_shape must have 3 entries");
    MetricsWindow w;
    w.k = shape[0];
    w.m = shape[1];
    w.n = shape[2];
    w.data = detail::read_values<float>(j["window"], w.k * w.m * w.n, "window");
    if (w.m != m) throw FormatError("window host count differs from record");
    e.window = std::move(w);
  }
  return e;
}

class TraceWriter {
 public:
  explicit TraceWriter(std::ostream& os) : os_(&os) {}
  void write(const TraceEntry& e) { *os_ << trace_json(e).dump() << '\n'; }

 private:
  std::ostream* os_;
};

inline std::vector<TraceEntry> read_trace(std::istream& in, const std::string& name = "trace") {
  std::vector<TraceEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(trace_entry_from(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw FormatError(name + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<TraceEntry> read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_trace(in, path);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json run_report_json(const RunReport& r) {
  Json by_app = Json::object(), done_by_app = Json::object();
  for (std::size_t a = 0; a < kAppClasses; ++a) {
    by_app[app_class_name(static_cast<AppClass>(a))] = r.slo_violation_fraction_by_app[a];
    done_by_app[app_class_name(static_cast<AppClass>(a))] = r.completed_by_app[a];
  }
  return Json{{"intervals", r.intervals},
              {"energy_kwh", r.energy_kwh},
              {"completed", r.completed},
              {"completed_by_app", std::move(done_by_app)},
              {"mean_response_time_s", r.mean_response_time_s},
              {"slo_violation_fraction", r.slo_violation_fraction},
              {"slo_violation_fraction_by_app", std::move(by_app)},
              {"migration_count", r.migration_count},
              {"migration_time_s", r.migration_time_s},
              {"mean_cpu_utilization", r.mean_cpu_utilization},
              {"mean_ram_utilization", r.mean_ram_utilization},
              {"improvement_ratio", optional_json(r.improvement_ratio)}};
}

inline Json detection_json(const DetectionReport& d) {
  return Json{{"accuracy", d.accuracy}, {"precision", d.precision}, {"recall", d.recall}, {"f1", d.f1},
              {"tp", d.tp},             {"fp", d.fp},               {"tn", d.tn},         {"fn", d.fn}};
}

// Rebuilds the report from a trace: QoS aggregates plus the improvement ratio
// of any decisions it carries.
inline RunReport report_from_trace(const std::vector<TraceEntry>& trace, const std::vector<HostSpec>& hosts) {
  std::vector<IntervalRecord> records;
  std::vector<DecisionRecord> decisions;
  for (const auto& e : trace) {
    records.push_back(e.record);
    if (e.decision) decisions.push_back(*e.decision);
  }
  RunReport r = qos_summary(records, hosts);
  if (!decisions.empty()) r.improvement_ratio = improvement_ratio(decisions);
  return r;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
  if (!out) throw FormatError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Attention export
// ---------------------------------------------------------------------------

inline const char* kAttentionHeader = "interval,layer,head,from_host,to_node,weight\n";

// One row per attention weight of one forward pass. Graph attention rows
// have m + 1 columns; the last is the global node.
template <class Real>
void write_attention_rows(std::ostream& os, std::int64_t interval, const FpeOutput<Real>& out) {
  char buf[32];
  auto emit = [&](const char* layer, std::size_t head, const Tensor<Real>& w) {
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), w.at(i, j));
        os << interval << ',' << layer << ',' << head << ',' << i << ',' << j << ','
           << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << '\n';
      }
  };
  emit("gat", 0, out.gat_attention);
  for (std::size_t h = 0; h < out.fuse_attention.size(); ++h) emit("fuse", h, out.fuse_attention[h]);
}

}  // namespace pregan
