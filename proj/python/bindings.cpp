// Python view of the core: channel formulas, the environment, networks, the
// PPO/Reptile algebra, baselines and whole runs driven by config text.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "v2xmeta/config.hpp"
#include "v2xmeta/evaluation.hpp"
#include "v2xmeta/studies.hpp"

namespace py = pybind11;
using namespace v2xmeta;

namespace {

std::vector<ActionIndex> to_actions(const std::vector<int>& a) {
  std::vector<ActionIndex> out;
  out.reserve(a.size());
  for (int i : a) out.push_back({i});
  return out;
}

Eigen::MatrixXd observation_rows(std::span<const Observation> obs) {
  return nn::to_matrix(obs).transpose();
}

py::dict summary_dict(const eval::EvalReport& r) {
  py::dict d;
  d["policy"] = r.policy;
  d["task"] = r.task;
  d["episodes"] = r.rows.size();
  d["v2i_sum_rate_bps"] = r.v2i_sum_rate.mean;
  d["v2i_sum_rate_ci95"] = r.v2i_sum_rate.ci95;
  d["success_probability"] = r.success_probability;
  d["cumulative_reward"] = r.reward.mean;
  return d;
}

}  // namespace

PYBIND11_MODULE(_v2xmeta, m) {
  m.doc() = "Meta-reinforcement-learning V2X spectrum sharing core";
  m.attr("__version__") = V2XMETA_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
  py::register_exception<eval::BudgetExceeded>(m, "BudgetExceeded", PyExc_RuntimeError);

  // channel
  m.def("path_loss_v2i_db", &channel::path_loss_v2i_db, py::arg("distance_km"));
  m.def("path_loss_v2v_db",
        [](double d) { return channel::path_loss_v2v_db(d); }, py::arg("distance_m"));
  m.def(
      "sample_fading_power",
      [](double k, std::uint64_t seed, int n) {
        Rng rng(seed);
        std::vector<double> out(static_cast<std::size_t>(n));
        for (auto& x : out) x = channel::sample_fading(k, rng).power;
        return out;
      },
      py::arg("k_factor"), py::arg("seed"), py::arg("count"));

  // tasks and environment
  py::class_<TaskConfig>(m, "TaskConfig")
      .def(py::init([](int links, double payload, double speed, double k_v2i, double k_v2v,
                       double upsilon) {
             auto t = with_factors(TaskConfig{}, links, payload, speed, k_v2i, k_v2v);
             t.upsilon = upsilon;
             return t;
           }),
           py::arg("links_per_vehicle") = 1, py::arg("payload_multiple") = 2.0,
           py::arg("speed_kmh") = 20.0, py::arg("k_v2i") = 15.0, py::arg("k_v2v") = 3.0,
           py::arg("upsilon") = std::numeric_limits<double>::quiet_NaN())
      .def_readwrite("vehicles", &TaskConfig::vehicles)
      .def_readwrite("bands", &TaskConfig::bands)
      .def_readwrite("slots", &TaskConfig::slots)
      .def_readwrite("upsilon", &TaskConfig::upsilon)
      .def_readonly("links_per_vehicle", &TaskConfig::links_per_vehicle)
      .def_readonly("speed_kmh", &TaskConfig::speed_kmh)
      .def_property_readonly("payload_multiple", &TaskConfig::payload_multiple)
      .def_property_readonly("action_count", &TaskConfig::action_count)
      .def_property_readonly("observation_size", &TaskConfig::observation_size)
      .def_property_readonly("label", &TaskConfig::label)
      .def("__repr__", [](const TaskConfig& t) { return "<TaskConfig " + t.label() + ">"; });

  m.def("calibrate_upsilon", &calibrate_upsilon, py::arg("task"));

  py::class_<Environment>(m, "Environment")
      .def(py::init<TaskConfig, std::uint64_t>(), py::arg("task"), py::arg("seed"))
      .def("reset", [](Environment& e, std::uint64_t s) { return observation_rows(e.reset(s)); },
           py::arg("seed"), "Observations as an (agents, features) array.")
      .def("next_episode", [](Environment& e) { return observation_rows(e.next_episode()); })
      .def("observe", [](const Environment& e) { return observation_rows(e.observe_all()); })
      .def(
          "step",
          [](Environment& e, const std::vector<int>& actions) {
            const auto r = e.step(to_actions(actions));
            py::dict d;
            d["observations"] = observation_rows(r.observations);
            d["reward"] = r.reward;
            d["v2i_rate_bps"] = r.v2i_rate_bps;
            d["v2v_rate_bps"] = r.v2v_rate_bps;
            d["v2i_sinr"] = r.v2i_sinr;
            d["v2v_sinr"] = r.v2v_sinr;
            d["remaining_bits"] = r.remaining_bits;
            d["success"] = r.success;
            d["done"] = r.done;
            return d;
          },
          py::arg("actions"))
      .def_property_readonly("agents", &Environment::agents)
      .def_property_readonly("upsilon", &Environment::upsilon)
      .def_property_readonly("slot", [](const Environment& e) { return e.state().slot; })
      .def_property_readonly("task", &Environment::task);

  // networks
  py::class_<nn::Architecture>(m, "Architecture")
      .def(py::init([](int in, std::vector<int> hidden, int out) {
             return nn::Architecture{in, std::move(hidden), out};
           }),
           py::arg("inputs"), py::arg("hidden"), py::arg("outputs"))
      .def_readonly("inputs", &nn::Architecture::inputs)
      .def_readonly("hidden", &nn::Architecture::hidden)
      .def_readonly("outputs", &nn::Architecture::outputs)
      .def_property_readonly("parameter_count", &nn::Architecture::parameter_count);

  py::class_<nn::ParameterSet>(m, "ParameterSet")
      .def(py::init<nn::Architecture>(), py::arg("architecture"))
      .def(py::init<nn::Architecture, std::vector<double>>(), py::arg("architecture"),
           py::arg("values"))
      .def_property_readonly("architecture", &nn::ParameterSet::architecture)
      .def_property_readonly("values",
                             [](const nn::ParameterSet& p) {
                               const auto v = p.values();
                               return std::vector<double>(v.begin(), v.end());
                             })
      .def("__len__", &nn::ParameterSet::size)
      .def("__eq__", [](const nn::ParameterSet& a, const nn::ParameterSet& b) { return a == b; });

  m.def(
      "initialize",
      [](const nn::Architecture& arch, std::uint64_t seed, double head_scale) {
        Rng rng(seed);
        return nn::initialize(arch, rng, head_scale);
      },
      py::arg("architecture"), py::arg("seed"), py::arg("head_scale") = 0.01);
  m.def(
      "forward",
      [](const nn::ParameterSet& p, const Eigen::MatrixXd& rows) {
        return Eigen::MatrixXd(nn::forward(p, rows.transpose()).transpose());
      },
      py::arg("params"), py::arg("inputs"), "Inputs and outputs are one row per sample.");

  py::class_<nn::Checkpoint>(m, "Checkpoint")
      .def_readonly("kind", &nn::Checkpoint::kind)
      .def_readonly("actor", &nn::Checkpoint::actor)
      .def_readonly("critic", &nn::Checkpoint::critic)
      .def_property_readonly("metadata",
                             [](const nn::Checkpoint& c) { return c.metadata.dump(); });
  m.def("load_checkpoint", &nn::load_checkpoint, py::arg("path"));

  // PPO and Reptile algebra
  m.def(
      "compute_gae",
      [](const std::vector<double>& r, const std::vector<double>& v,
         const std::vector<int>& done, double gamma, double lambda) {
        const std::vector<std::uint8_t> d(done.begin(), done.end());
        const auto a = ppo::compute_gae(r, v, d, gamma, lambda);
        py::dict out;
        out["advantages"] = a.advantages;
        out["td_errors"] = a.td_errors;
        out["returns"] = a.returns;
        return out;
      },
      py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("gamma"),
      py::arg("lam"));
  m.def("clipped_surrogate", &ppo::clipped_surrogate, py::arg("ratio"), py::arg("advantage"),
        py::arg("clip"));
  m.def(
      "reptile_update",
      [](const nn::ParameterSet& meta, const std::vector<nn::ParameterSet>& adapted, double mu,
         double epsilon) { return meta::reptile_update(meta, adapted, mu, epsilon); },
      py::arg("meta"), py::arg("adapted"), py::arg("mu"), py::arg("epsilon"));

  // baselines
  m.def(
      "evaluate_baseline",
      [](const std::string& kind, const TaskConfig& task, int episodes, std::uint64_t seed,
         std::int64_t budget) {
        std::unique_ptr<eval::Policy> p;
        switch (eval::parse_policy_kind(kind)) {
          case eval::PolicyKind::Random: p = std::make_unique<eval::RandomPolicy>(); break;
          case eval::PolicyKind::MaxV2V: p = std::make_unique<eval::MaxV2VPolicy>(budget); break;
          default: throw ConfigError("evaluate_baseline takes 'random' or 'maxV2V'");
        }
        py::gil_scoped_release release;
        const auto r = eval::evaluate(*p, task, episodes, seed);
        py::gil_scoped_acquire acquire;
        return summary_dict(r);
      },
      py::arg("kind"), py::arg("task"), py::arg("episodes"), py::arg("seed"),
      py::arg("budget") = 1'000'000);

  // whole runs
  m.def("config_keys", &config_keys);
  m.def(
      "resolve_config",
      [](const std::string& text, bool desk) { return emit_config(parse_config(text, "<python>", desk)); },
      py::arg("text") = "", py::arg("desk") = false,
      "Every key with its resolved value, in config file syntax.");
  m.def(
      "run",
      [](const std::string& text, bool desk, std::optional<std::function<void(std::string)>> log) {
        const auto cfg = parse_config(text, "<python>", desk);
        studies::Log sink;
        if (log) {
          sink = [&log](const std::string& s) {
            py::gil_scoped_acquire acquire;
            (*log)(s);
          };
        }
        py::gil_scoped_release release;
        return studies::run(cfg, sink).files;
      },
      py::arg("config"), py::arg("desk") = false, py::arg("log") = py::none(),
      "Runs one mode from config text; returns the files written under `out`.");
}
