#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "rpclink/analytics.hpp"
#include "rpclink/attack.hpp"
#include "rpclink/catalog.hpp"
#include "rpclink/detector.hpp"
#include "rpclink/error.hpp"
#include "rpclink/harness.hpp"
#include "rpclink/ledger.hpp"
#include "rpclink/random.hpp"
#include "rpclink/traffic.hpp"

namespace py = pybind11;
using namespace rpclink;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::handle& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

WalletProfile wallet(const std::string& name) { return find_profile(builtin_profiles(), name); }

// Names are mapped to ids in first-seen order so the C++ set algebra applies.
PseudonymSet interned(const std::vector<std::string>& names, std::map<std::string, std::uint32_t>& ids,
                      std::vector<std::string>& back) {
  PseudonymSet out;
  for (const auto& n : names) {
    auto [it, fresh] = ids.emplace(n, static_cast<std::uint32_t>(back.size()));
    if (fresh) back.push_back(n);
    out.push_back(PseudonymId{it->second});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

py::dict interval_dict(const IntervalEstimate& e) {
  py::dict d;
  d["k"] = e.k;
  d["theoretical_k"] = e.theoretical_k;
  d["safety_margin"] = e.safety_margin;
  d["method"] = std::string(to_string(e.method));
  return d;
}

py::dict estimate_dict(const SuccessEstimate& e) {
  py::dict d;
  d["expected_p"] = e.expected_p;
  d["expected_r"] = e.expected_r;
  d["stderr_p"] = e.stderr_p;
  d["stderr_r"] = e.stderr_r;
  d["samples"] = e.samples;
  d["alpha"] = e.alpha;
  d["m"] = e.m;
  d["filtered"] = e.filtered;
  return d;
}

py::dict metrics_dict(const EvalMetrics& e) {
  py::dict d;
  d["accuracy"] = e.accuracy;
  d["precision"] = e.precision;
  d["recall"] = e.recall;
  d["samples"] = e.samples;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of rpclink: ledger windows, traffic synthesis, detection and the intersection model.";

  static py::exception<Error> error_type(m, "RpclinkError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(error_type.ptr())(py::str(e.what()));
      inst.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error_type.ptr(), inst.ptr());
    }
  });

  // model
  m.def("appearance_prob", &appearance_prob, py::arg("p"), py::arg("x"));
  m.def("exclusion_prob", &exclusion_prob, py::arg("p"), py::arg("xs"));
  m.def(
      "success_rate",
      [](double alpha, int rounds, std::vector<double> shares, std::vector<double> xs) {
        ModelParams mp;
        mp.alpha = alpha;
        mp.m = rounds;
        mp.n = static_cast<int>(shares.size()) + 1;
        mp.p = std::move(shares);
        mp.xs = std::move(xs);
        return success_rate(mp);
      },
      py::arg("alpha"), py::arg("m"), py::arg("shares"), py::arg("xs"));
  m.def("transacting_threshold", &transacting_threshold, py::arg("k"), py::arg("block_time"), py::arg("q"));
  m.def("window_transacting_probability", &window_transacting_probability, py::arg("rate"), py::arg("k"),
        py::arg("block_time"));

  // catalog
  m.def("profiles", [] {
    py::list out;
    for (const auto& p : builtin_profiles()) out.append(to_py(p.to_json()));
    return out;
  });
  m.def(
      "estimate_k",
      [](const std::string& name, std::optional<double> cycle) {
        WalletProfile p = wallet(name);
        if (cycle) p.cycle = *cycle;
        return interval_dict(estimate_k(p));
      },
      py::arg("wallet"), py::arg("cycle") = py::none(), "k for a builtin wallet; `cycle` overrides the poll period.");

  // ledger
  py::class_<Ledger>(m, "Ledger")
      .def_static(
          "synthesize",
          [](std::uint32_t users, double rate, double block_time, double duration, double zipf, std::uint64_t seed) {
            LedgerConfig c;
            c.num_users = users;
            c.rate = rate;
            c.block_time = block_time;
            c.duration = duration;
            c.activity = zipf > 0 ? ActivityDistribution::zipf(zipf) : ActivityDistribution::uniform();
            c.seed = seed;
            py::gil_scoped_release release;
            return synth_ledger(c);
          },
          py::arg("users"), py::arg("rate"), py::arg("block_time") = 12.0, py::arg("duration") = 3600.0,
          py::arg("zipf") = 1.1, py::arg("seed") = 0, "Zipf activity; zipf <= 0 gives uniform activity.")
      .def_static("load", &ingest_ledger_file, py::arg("path"))
      .def(
          "save",
          [](const Ledger& l, const std::string& path) {
            std::ofstream out(path);
            if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
            write_ledger_jsonl(out, l);
          },
          py::arg("path"))
      .def_property_readonly("num_blocks", [](const Ledger& l) { return l.blocks().size(); })
      .def_property_readonly("block_time", &Ledger::block_time)
      .def_property_readonly("transaction_count", &Ledger::transaction_count)
      .def_property_readonly("users", &Ledger::users)
      .def(
          "block",
          [](const Ledger& l, std::size_t i) {
            const Block& b = l.blocks().at(i);
            std::vector<std::string> who;
            for (const Transaction& tx : b.transactions) who.push_back(l.name(tx.initiator));
            return py::make_tuple(b.height, b.timestamp, who);
          },
          py::arg("index"), "(height, timestamp, initiators)")
      .def(
          "candidate_set",
          [](const Ledger& l, double t_q, int k) {
            std::vector<std::string> out;
            for (PseudonymId id : candidate_set(l, t_q, k).pseudonyms) out.push_back(l.name(id));
            return out;
          },
          py::arg("t_q"), py::arg("k"))
      .def(
          "measure", [](const Ledger& l, int k) { return to_py(measure_activity(l, k).to_json()); }, py::arg("k"))
      .def("__len__", [](const Ledger& l) { return l.blocks().size(); });

  m.def(
      "intersect",
      [](const std::vector<std::vector<std::string>>& rounds) {
        std::map<std::string, std::uint32_t> ids;
        std::vector<std::string> back;
        std::vector<PseudonymSet> sets;
        for (const auto& r : rounds) sets.push_back(interned(r, ids, back));
        std::vector<std::string> out;
        for (PseudonymId id : intersect(sets)) out.push_back(back[id.value]);
        std::sort(out.begin(), out.end());
        return out;
      },
      py::arg("rounds"));

  m.def(
      "attack",
      [](const Ledger& l, const std::vector<double>& t_q, int k, double q, bool filter) {
        const ActivityStats stats = measure_activity(l, k);
        std::vector<CandidateSet> windows;
        for (std::size_t i = 0; i < t_q.size(); ++i) windows.push_back(candidate_set(l, t_q[i], k, i + 1));
        const double cut =
            filter ? transacting_threshold(k, l.block_time(), q) : std::numeric_limits<double>::infinity();
        return to_py(outcome_to_json(identify(intersect(windows), stats, cut, windows.size()), windows, l.users()));
      },
      py::arg("ledger"), py::arg("t_q"), py::arg("k"), py::arg("q") = 0.01, py::arg("filter") = true);

  m.def(
      "expected_success",
      [](const Ledger& l, int k, double alpha, int rounds, double q, bool filter, std::size_t samples,
         std::uint64_t seed) {
        const ActivityStats stats = measure_activity(l, k);
        const DistributionSet dists = DistributionSet::from_activity(stats);
        std::optional<double> cut;
        if (filter) cut = transacting_threshold(k, l.block_time(), q) / stats.lambda_total;
        py::gil_scoped_release release;
        return expected_success(dists, alpha, rounds, cut, {samples, seed, 0});
      },
      py::arg("ledger"), py::arg("k"), py::arg("alpha"), py::arg("m"), py::arg("q") = 0.01, py::arg("filter") = true,
      py::arg("samples") = 200000, py::arg("seed") = 0);
  py::class_<SuccessEstimate>(m, "SuccessEstimate")
      .def_readonly("expected_p", &SuccessEstimate::expected_p)
      .def_readonly("expected_r", &SuccessEstimate::expected_r)
      .def_readonly("stderr_p", &SuccessEstimate::stderr_p)
      .def_readonly("stderr_r", &SuccessEstimate::stderr_r)
      .def_readonly("samples", &SuccessEstimate::samples)
      .def("to_dict", &estimate_dict)
      .def("__repr__", [](const SuccessEstimate& e) {
        std::ostringstream s;
        s << "SuccessEstimate(expected_p=" << e.expected_p << ", stderr_p=" << e.stderr_p << ")";
        return s.str();
      });

  // traffic and detection
  m.def(
      "synth_traffic",
      [](const std::string& name, std::size_t sessions, std::size_t tx, std::uint64_t seed, double noise_rate) {
        const auto traces = synth_corpus(wallet(name), sessions, tx, JitterModel{}, noise_rate, seed);
        py::list out;
        for (const PacketTrace& t : traces) {
          std::ostringstream csv;
          write_trace_csv(csv, t);
          py::dict d;
          d["csv"] = csv.str();
          d["flows"] = to_py(flow_sidecar(t));
          d["t_q"] = ground_truth_tq(t);
          d["packets"] = t.size();
          out.append(d);
        }
        return out;
      },
      py::arg("wallet"), py::arg("sessions"), py::arg("tx"), py::arg("seed") = 0, py::arg("noise_rate") = 0.2,
      "Labelled sessions as CSV text plus the flow sidecar and ground-truth T_q.");

  m.def(
      "train_classifier",
      [](const std::string& name, int radius, std::size_t per_class, int trees, std::uint64_t seed) {
        const WalletProfile p = wallet(name);
        const auto corpus = synth_corpus(p, per_class / 20 + 2, 20, JitterModel{}, 0.2, derive_seed(seed, 0xc0de));
        const TrainingSet set =
            build_training_set(corpus, p, radius, {per_class, per_class, per_class}, derive_seed(seed, 0x7a11));
        Hyperparams h;
        h.forest.trees = trees;
        h.forest.seed = seed;
        const TrainResult r = train(set, h, RuleConfig::from_profile(p));
        py::dict d;
        d["classifier"] = r.classifier.to_json().dump();
        d["holdout"] = metrics_dict(r.holdout);
        d["rules"] = metrics_dict(r.rule_holdout);
        return d;
      },
      py::arg("wallet"), py::arg("radius") = 4, py::arg("per_class") = 2000, py::arg("trees") = 100,
      py::arg("seed") = 0, "Returns the classifier document (JSON text) and holdout metrics.");

  m.def(
      "detect",
      [](const std::string& name, const std::string& classifier_json, const std::string& csv, py::object flows) {
        const WalletProfile p = wallet(name);
        const Classifier clf = Classifier::from_json(nlohmann::json::parse(classifier_json));
        std::istringstream in(csv);
        const PacketTrace trace = read_trace_csv(in, from_py(flows));
        return detect_tq(trace, clf, p.target(), p.overhead, p.dedup_window());
      },
      py::arg("wallet"), py::arg("classifier"), py::arg("csv"), py::arg("flows"));

  // experiments
  m.def(
      "scenario", [](const std::string& toml) { return to_py(Scenario::from_toml_string(toml).to_json()); },
      py::arg("toml"), "Parses and validates a scenario; returns its normalized form.");
  m.def(
      "run_experiment",
      [](const std::string& toml) {
        const Scenario s = Scenario::from_toml_string(toml);
        nlohmann::json j;
        {
          py::gil_scoped_release release;
          const Experiment e(s);
          j = e.run().payload(e.ledger().users());
        }
        return to_py(j);
      },
      py::arg("toml"), "Runs every trial and returns the deterministic report payload.");
  m.def(
      "run_experiment_to_directory",
      [](const std::string& toml, const std::string& dir) {
        const Scenario s = Scenario::from_toml_string(toml);
        ExperimentReport r;
        {
          py::gil_scoped_release release;
          r = run_experiment_to_directory(s, dir);
        }
        py::dict d;
        d["success_rate"] = r.success_rate;
        d["false_positive_rate"] = r.false_positive_rate;
        d["expected_p"] = r.analytic.expected_p;
        d["trials"] = r.trials.size();
        return d;
      },
      py::arg("toml"), py::arg("directory"));
}
