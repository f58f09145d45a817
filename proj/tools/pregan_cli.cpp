// pregan: command-line driver for simulation, training and evaluation runs.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pregan/config.hpp"
#include "pregan/environment.hpp"
#include "pregan/evaluate.hpp"
#include "pregan/gradsuite.hpp"
#include "pregan/loop.hpp"
#include "pregan/persist.hpp"

namespace {

using namespace pregan;
using Real = float;
using Stream = ExperimentConfig::Stream;

constexpr int kUsage = 1;
constexpr int kDataError = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<std::size_t> intervals;
  std::optional<double> lambda;
  bool no_preemption = false;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config, "experiment config (JSON)");
  sub->add_option("--seed", o.seed, "master seed, overrides the config");
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
  sub->add_option("--intervals", o.intervals, "number of scheduling intervals")->check(CLI::PositiveNumber);
  sub->add_option("--lambda", o.lambda, "mean task arrivals per interval")->check(CLI::NonNegativeNumber);
  sub->add_flag("--no-preemption", o.no_preemption, "execute the baseline schedule unchanged");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.lambda) c.lambda = *o.lambda;
  c.validate();
  return c;
}

std::string out_path(const CommonOptions& o, const std::string& name) {
  std::filesystem::create_directories(o.out);
  return (std::filesystem::path(o.out) / name).string();
}

void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_config(const CommonOptions& o, const ExperimentConfig& c) {
  write_json(out_path(o, "config.json"), config_to_json(c));
}

std::vector<FpeSample> samples_from_trace(const std::vector<TraceEntry>& trace, const ExperimentConfig& c) {
  std::vector<FpeSample> out;
  for (const auto& e : trace) {
    if (!e.window) throw DataError("dataset records need windows; produce them with 'collect'");
    FpeSample s;
    s.window = *e.window;
    s.graph = schedule_graph(e.schedule, c.fpe().max_containers);
    s.labels = e.record.labels;
    out.push_back(std::move(s));
  }
  return out;
}

Json fpe_evaluation_json(const FpeEvaluation& ev) {
  return Json{{"interval_detection", detection_json(ev.interval)},
              {"host_detection", detection_json(ev.host)},
              {"class_accuracy", ev.class_accuracy},
              {"faulty_hosts", ev.faulty_hosts},
              {"hitrate_100", optional_json(ev.diagnosis.hitrate_100)},
              {"ndcg_100", optional_json(ev.diagnosis.ndcg_100)}};
}

template <class Real_>
Tensor<Real_> final_carry(const FpeModel<Real_>& model, const std::vector<FpeSample>& data) {
  std::optional<Tensor<Real_>> carry;
  for (const auto& s : data) {
    if (!carry || carry->rows() != s.window.m) carry = zero_carry(model, s.window.m);
    carry = next_carry(fpe_forward(model, flatten_window<Real_>(s.window), s.graph, *carry));
  }
  return carry ? *carry : zero_carry(model, 0);
}

void write_trace(const std::string& path, const std::vector<TraceEntry>& entries) {
  std::ostringstream os;
  TraceWriter w(os);
  for (const auto& e : entries) w.write(e);
  write_text(path, os.str());
}

// ---------------------------------------------------------------------------

int cmd_simulate(const CommonOptions& o) {
  auto c = resolve(o);
  const std::size_t n = o.intervals.value_or(c.eval_intervals);
  Environment env(c.environment(c.stream(Stream::kEvaluation)), static_cast<std::int64_t>(n));
  std::vector<TraceEntry> trace;
  for (std::size_t t = 0; t < n; ++t) {
    auto p = env.prepare();
    auto rec = env.execute(p, p.baseline);
    trace.push_back(TraceEntry{std::move(rec), std::move(p.baseline), std::nullopt, std::nullopt});
  }
  write_config(o, c);
  write_trace(out_path(o, "trace.jsonl"), trace);
  write_json(out_path(o, "report.json"), run_report_json(report_from_trace(trace, c.host_table())));
  std::cout << "simulate: " << n << " intervals -> " << o.out << "\n";
  return 0;
}

int cmd_collect(const CommonOptions& o) {
  auto c = resolve(o);
  const std::size_t n = o.intervals.value_or(c.fpe_intervals);
  const auto data = collect_fpe_dataset(c.environment(c.stream(Stream::kFpeData)), n);
  std::ostringstream os;
  TraceWriter w(os);
  std::array<std::size_t, kFaultClasses + 1> counts{};
  for (const auto& d : data) {
    w.write(TraceEntry{d.record, d.schedule, std::nullopt, d.sample.window});
    for (int l : d.record.labels) ++counts[static_cast<std::size_t>(l)];
  }
  write_config(o, c);
  write_text(out_path(o, "dataset.jsonl"), os.str());
  Json labels = Json::object();
  for (int l = 0; l <= kFaultClasses; ++l) labels[fault_class_name(static_cast<FaultClass>(l))] = counts[static_cast<std::size_t>(l)];
  write_json(out_path(o, "dataset_summary.json"), Json{{"intervals", n}, {"host_labels", labels}});
  std::cout << "collect: " << n << " records -> " << o.out << "/dataset.jsonl\n";
  return 0;
}

int cmd_train_fpe(const CommonOptions& o, const std::string& data_path) {
  auto c = resolve(o);
  std::vector<FpeSample> samples;
  if (!data_path.empty()) {
    samples = samples_from_trace(read_trace_file(data_path), c);
  } else {
    const std::size_t n = o.intervals.value_or(c.fpe_intervals);
    samples = samples_of(collect_fpe_dataset(c.environment(c.stream(Stream::kFpeData)), n));
  }
  if (samples.size() < 2) throw DataError("need at least 2 records to train");
  const std::size_t split = std::max<std::size_t>(1, samples.size() * 8 / 10);
  const std::vector<FpeSample> train(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(split));
  auto model = FpeModel<Real>::create(c.fpe(), c.stream(Stream::kFpeInit));
  PrototypeSet protos;
  const auto rep = train_fpe(model, protos, train, c.fpe_training());

  std::vector<std::vector<int>> labels;
  for (std::size_t t = split; t < samples.size(); ++t) labels.push_back(samples[t].labels);
  const auto pred = predict_sequence(model, protos, samples, split);
  Json holdout = nullptr;
  if (!pred.empty()) holdout = fpe_evaluation_json(evaluate_predictions(pred, labels));
  const auto geo = prototype_geometry(model, protos, samples, split);
  Json geometry = Json::array();
  for (std::size_t j = 1; j < geo.own.size(); ++j) {
    geometry.push_back(Json{{"class", fault_class_name(static_cast<FaultClass>(j))},
                            {"samples", geo.count[j]},
                            {"own_distance", geo.own[j]},
                            {"other_distance", geo.other[j]}});
  }
  Json history = Json::array();
  for (const auto& h : rep.history) history.push_back(Json{{"train_loss", h.train_loss}, {"validation_loss", h.validation_loss}});

  Checkpoint<Real> ck;
  ck.fpe = model;
  ck.prototypes = protos;
  ck.carry = final_carry(model, samples);
  write_config(o, c);
  save_checkpoint(out_path(o, "fpe.ckpt.json"), ck);
  write_json(out_path(o, "fpe_report.json"),
             Json{{"records", samples.size()},
                  {"train_records", split},
                  {"epochs", rep.epochs},
                  {"best_epoch", rep.best_epoch},
                  {"best_validation_loss", rep.best_validation_loss},
                  {"prototype_updates", rep.prototype_updates},
                  {"holdout", holdout},
                  {"prototype_geometry", geometry},
                  {"history", history}});
  std::cout << "train-fpe: " << rep.epochs << " epochs -> " << o.out << "/fpe.ckpt.json\n";
  return 0;
}

int cmd_train_gan(const CommonOptions& o, const std::string& ckpt_path) {
  auto c = resolve(o);
  auto ck = load_checkpoint<Real>(ckpt_path);
  if (!ck.fpe) throw DataError(ckpt_path + " holds no encoder");
  const std::size_t n = o.intervals.value_or(c.gan_intervals);
  auto gan = GanModel<Real>::create(c.gan(), c.stream(Stream::kGanInit));
  if (gan.cfg.embed != ck.fpe->cfg.embed) throw DataError("config E differs from the encoder's embedding width");
  Environment env(c.environment(c.stream(Stream::kGanTraining)), static_cast<std::int64_t>(n));
  const auto rep = train_gan(*ck.fpe, gan, env, n, c.gan_training());

  std::ostringstream os;
  std::vector<DecisionRecord> decisions;
  std::size_t match = 0;
  for (const auto& s : rep.steps) {
    decisions.push_back(s.decision);
    match += prefer_new(s.decision.d0, s.decision.d1) == s.amended_better;
    os << Json{{"decision", decision_json(s.decision)},
               {"sim_baseline", s.sim_baseline},
               {"sim_amended", s.sim_amended},
               {"amended_better", s.amended_better},
               {"proposed_migrations", s.proposed_migrations},
               {"loss_d", s.loss_d},
               {"loss_g", s.loss_g}}
              .dump()
       << "\n";
  }
  Json quartiles = Json::array();
  const std::size_t q = decisions.size() / 4;
  for (std::size_t i = 0; i < 4 && q > 0; ++i) {
    const std::vector<DecisionRecord> part(decisions.begin() + static_cast<std::ptrdiff_t>(i * q),
                                           decisions.begin() + static_cast<std::ptrdiff_t>((i + 1) * q));
    quartiles.push_back(optional_json(improvement_ratio(part)));
  }
  ck.gan = gan;
  write_config(o, c);
  save_checkpoint(out_path(o, "model.ckpt.json"), ck);
  write_text(out_path(o, "gan_steps.jsonl"), os.str());
  write_json(out_path(o, "gan_report.json"),
             Json{{"intervals", n},
                  {"candidate_intervals", rep.steps.size()},
                  {"improvement_ratio", optional_json(improvement_ratio(decisions))},
                  {"improvement_ratio_by_quartile", quartiles},
                  {"discriminator_agreement",
                   rep.steps.empty() ? Json(nullptr)
                                     : Json(static_cast<double>(match) / static_cast<double>(rep.steps.size()))},
                  {"qos", run_report_json(qos_summary(rep.records, c.host_table()))}});
  std::cout << "train-gan: " << rep.steps.size() << " candidate intervals -> " << o.out << "/model.ckpt.json\n";
  return 0;
}

int cmd_run(const CommonOptions& o, const std::string& ckpt_path) {
  auto c = resolve(o);
  const std::size_t n = o.intervals.value_or(c.eval_intervals);
  std::optional<Checkpoint<Real>> ck;
  if (!o.no_preemption) {
    if (ckpt_path.empty()) throw CLI::RequiredError("--checkpoint (or --no-preemption)");
    ck = load_checkpoint<Real>(ckpt_path);
    if (!ck->fpe || !ck->gan) throw DataError(ckpt_path + " needs both the encoder and the GAN");
  }
  Environment env(c.environment(c.stream(Stream::kEvaluation)), static_cast<std::int64_t>(n));
  std::ostringstream attention;
  std::vector<Schedule> executed;
  LoopOptions<Real> opts;
  if (ck) {
    opts.carry = ck->carry;
    attention << kAttentionHeader;
    opts.observe = [&](std::int64_t t, const Decision<Real>& d) {
      write_attention_rows(attention, t, d.fpe);
      executed.push_back(d.final_schedule);
    };
  }
  // The baseline schedules are needed for the trace in bypass mode.
  std::vector<Schedule> baseline;
  LoopResult res;
  if (ck) {
    res = run_closed_loop<Real>(env, n, &*ck->fpe, ck->prototypes.vectors.empty() ? nullptr : &ck->prototypes,
                                &*ck->gan, opts);
  } else {
    for (std::size_t t = 0; t < n; ++t) {
      auto p = env.prepare();
      res.records.push_back(env.execute(p, p.baseline));
      baseline.push_back(std::move(p.baseline));
    }
  }
  std::vector<TraceEntry> trace;
  for (std::size_t t = 0; t < res.records.size(); ++t) {
    TraceEntry e{res.records[t], ck ? executed[t] : baseline[t], std::nullopt, std::nullopt};
    if (ck) e.decision = res.decisions[t];
    trace.push_back(std::move(e));
  }
  Json report = run_report_json(report_from_trace(trace, c.host_table()));
  if (ck) {
    std::vector<std::vector<HostPrediction>> pred;
    std::vector<std::vector<int>> labels;
    for (std::size_t t = 0; t < res.records.size(); ++t) {
      std::vector<HostPrediction> row(res.detected[t].size());
      for (std::size_t i = 0; i < row.size(); ++i) {
        row[i].detected = res.detected[t][i];
        row[i].score1 = res.fault_scores[t][i];
        row[i].score0 = 1.0 - row[i].score1;
        row[i].predicted_class = res.predicted_classes[t][i];
      }
      pred.push_back(std::move(row));
      labels.push_back(res.records[t].labels);
    }
    report["fault_prediction"] = fpe_evaluation_json(evaluate_predictions(pred, labels));
  }
  write_config(o, c);
  write_trace(out_path(o, "trace.jsonl"), trace);
  write_json(out_path(o, "report.json"), report);
  if (ck) write_text(out_path(o, "attention.csv"), attention.str());
  // Wall-clock figures vary run to run, so they live apart from the report.
  Json timing{{"scheduler_seconds", res.scheduler_seconds}, {"model_seconds", res.pregan_seconds}};
  timing["overhead_ratio"] =
      ck && res.scheduler_seconds > 0.0 ? Json(overhead_ratio(res.pregan_seconds, res.scheduler_seconds)) : Json(nullptr);
  write_json(out_path(o, "timing.json"), timing);
  std::cout << "run: " << n << " intervals" << (ck ? "" : " (no preemption)") << " -> " << o.out << "\n";
  return 0;
}

int cmd_evaluate(const CommonOptions& o, const std::string& trace_path, const std::string& baseline_path) {
  auto c = resolve(o);
  const auto trace = read_trace_file(trace_path);
  if (trace.empty()) throw DataError(trace_path + " is empty");
  if (trace.front().record.raw_features.size() != c.m) throw DataError("trace host count differs from config m");
  const auto r = report_from_trace(trace, c.host_table());
  Json out{{"run", run_report_json(r)}};
  if (!baseline_path.empty()) {
    const auto base_trace = read_trace_file(baseline_path);
    if (base_trace.empty()) throw DataError(baseline_path + " is empty");
    const auto b = report_from_trace(base_trace, c.host_table());
    out["baseline"] = run_report_json(b);
    out["comparison"] = Json{
        {"energy_ratio", b.energy_kwh > 0.0 ? Json(r.energy_kwh / b.energy_kwh) : Json(nullptr)},
        {"slo_violation_difference", r.slo_violation_fraction - b.slo_violation_fraction},
        {"response_time_difference_s", r.mean_response_time_s - b.mean_response_time_s}};
  }
  write_json(out_path(o, "evaluation.json"), out);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_grad_check(const CommonOptions& o) {
  const auto seed = o.seed.value_or(7);
  bool ok = true;
  Json cases = Json::array();
  for (const auto& gc : gradient_suite(1e-3, seed)) {
    ok = ok && gc.report.passed();
    cases.push_back(Json{{"name", gc.name},
                         {"max_rel_error", gc.report.max_rel_error},
                         {"checked", gc.report.checked},
                         {"passed", gc.report.passed()}});
    std::cout << (gc.report.passed() ? "PASS " : "FAIL ") << gc.name << " max_rel_error=" << gc.report.max_rel_error
              << " entries=" << gc.report.checked << "\n";
  }
  write_json(out_path(o, "grad_check.json"), Json{{"tolerance", 1e-3}, {"passed", ok}, {"cases", cases}});
  return ok ? 0 : kDataError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PreGAN fault-tolerance simulator and trainer"};
  app.require_subcommand(1);
  CommonOptions o;
  std::string data, checkpoint, trace, baseline;

  auto* simulate = app.add_subcommand("simulate", "run the baseline scheduler and write a trace");
  add_common(simulate, o);
  auto* collect = app.add_subcommand("collect", "collect an encoder training dataset");
  add_common(collect, o);
  auto* train_fpe_cmd = app.add_subcommand("train-fpe", "train the fault prototype encoder");
  add_common(train_fpe_cmd, o);
  train_fpe_cmd->add_option("--data", data, "dataset from 'collect' (collected on the fly when absent)");
  auto* train_gan_cmd = app.add_subcommand("train-gan", "train the migration generator and discriminator");
  add_common(train_gan_cmd, o);
  train_gan_cmd->add_option("--checkpoint", checkpoint, "encoder checkpoint from 'train-fpe'")->required();
  auto* run = app.add_subcommand("run", "closed-loop run with preemptive migration");
  add_common(run, o);
  run->add_option("--checkpoint", checkpoint, "model checkpoint from 'train-gan'");
  auto* evaluate = app.add_subcommand("evaluate", "recompute the run report from a trace");
  add_common(evaluate, o);
  evaluate->add_option("--trace", trace, "trace to evaluate")->required();
  evaluate->add_option("--baseline", baseline, "baseline trace to compare against");
  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient checks");
  add_common(grad, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }
  try {
    if (*simulate) return cmd_simulate(o);
    if (*collect) return cmd_collect(o);
    if (*train_fpe_cmd) return cmd_train_fpe(o, data);
    if (*train_gan_cmd) return cmd_train_gan(o, checkpoint);
    if (*run) return cmd_run(o, checkpoint);
    if (*evaluate) return cmd_evaluate(o, trace, baseline);
    if (*grad) return cmd_grad_check(o);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
