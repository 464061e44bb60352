#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "heatfuzz/attention.hpp"
#include "heatfuzz/markov.hpp"
#include "heatfuzz/orchestrator.hpp"
#include "heatfuzz/target.hpp"

namespace py = pybind11;
using namespace heatfuzz;

namespace {

Bytes to_bytes(const py::bytes& data) {
  std::string text = data;
  return Bytes(text.begin(), text.end());
}

py::bytes from_bytes(const Bytes& data) {
  return py::bytes(reinterpret_cast<const char*>(data.data()), data.size());
}

TokenDictionary dict_from_tokens(const std::vector<py::bytes>& tokens) {
  std::vector<Bytes> out;
  out.reserve(tokens.size());
  for (const auto& token : tokens) out.push_back(to_bytes(token));
  return TokenDictionary(std::move(out));
}

py::dict trace_to_dict(const TargetProgram& program, const ExecutionTrace& trace) {
  py::list blocks;
  for (int index : trace.block_seq) blocks.append(program.id_of(index));
  py::dict out;
  out["blocks"] = blocks;
  out["crashed"] = trace.crashed;
  out["termination"] = trace.termination == Termination::CrashBlock      ? "crash-block"
                       : trace.termination == Termination::StepLimit     ? "step-limit"
                                                                         : "no-matching-guard";
  return out;
}

}  // namespace

PYBIND11_MODULE(heatfuzz_py, m) {
  m.doc() = "coverage-guided fuzzing engine with reward-directed attention guidance";

  py::class_<TargetProgram>(m, "TargetProgram")
      .def_property_readonly("init_id", &TargetProgram::init_id)
      .def_property_readonly("block_count", &TargetProgram::block_count)
      .def_property_readonly("input_len_max", &TargetProgram::input_len_max)
      .def("block_ids",
           [](const TargetProgram& program) {
             std::vector<std::string> ids;
             for (const auto& block : program.blocks()) ids.push_back(block.id);
             return ids;
           })
      .def("serialize", [](const TargetProgram& program) { return serialize_target(program); });

  m.def("parse_target", &parse_target, py::arg("text"));
  m.def("demo_target_source", &demo_target_source, py::arg("name"));
  m.def("demo_target_names", [] {
    std::vector<std::string> names;
    for (const auto& [name, program] : demo_targets()) names.push_back(name);
    return names;
  });

  m.def(
      "execute",
      [](const TargetProgram& program, const py::bytes& input, int step_limit) {
        return trace_to_dict(program, execute(program, to_bytes(input), step_limit));
      },
      py::arg("program"), py::arg("input"), py::arg("step_limit") = kDefaultStepLimit);

  m.def("pre_dominants", [](const TargetProgram& program) {
    Cfg cfg = build_cfg(program);
    py::dict out;
    for (int b = 0; b < cfg.block_count; ++b) {
      py::list preds;
      for (int p : cfg.pre_dominants[static_cast<size_t>(b)])
        preds.append(cfg.ids[static_cast<size_t>(p)]);
      out[py::str(cfg.ids[static_cast<size_t>(b)])] = preds;
    }
    return out;
  });

  m.def(
      "apply_mutation",
      [](const py::bytes& seed, const std::string& mutator, int position, int param,
         const std::vector<py::bytes>& tokens) {
        TokenDictionary dict = dict_from_tokens(tokens);
        Mutation mutation{mutator_from_name(mutator), position, param};
        return from_bytes(apply_mutation(to_bytes(seed), mutation, dict));
      },
      py::arg("seed"), py::arg("mutator"), py::arg("position"), py::arg("param"),
      py::arg("tokens") = std::vector<py::bytes>{});

  m.def(
      "schedule_size",
      [](size_t seed_len, const std::vector<py::bytes>& tokens) {
        return DeterministicSchedule::total_count(seed_len, dict_from_tokens(tokens));
      },
      py::arg("seed_len"), py::arg("tokens") = std::vector<py::bytes>{});

  // Reward analysis over explicit transition counts:
  //   edges = [(from_id, to_id, count), ...], covered = [block_id, ...]
  m.def(
      "solve_rewards",
      [](const TargetProgram& program,
         const std::vector<std::tuple<std::string, std::string, uint64_t>>& edges,
         const std::vector<std::string>& covered) {
        Cfg cfg = build_cfg(program);
        GlobalCoverage gc(program.block_count());
        for (const auto& [from, to, count] : edges) {
          int f = program.index_of(from);
          int t = program.index_of(to);
          if (f < 0 || t < 0) throw std::invalid_argument("unknown block in edge list");
          gc.add_edge_count(f, t, count);
        }
        for (const auto& id : covered) {
          int b = program.index_of(id);
          if (b < 0) throw std::invalid_argument("unknown covered block '" + id + "'");
          gc.mark_covered(b);
        }
        Dtmc dtmc = estimate_dtmc(gc, cfg);
        RewardVector rewards = solve_rewards(dtmc, gc.covered());
        py::dict out;
        for (int b = 0; b < program.block_count(); ++b)
          out[py::str(program.id_of(b))] = rewards.reward[static_cast<size_t>(b)];
        return out;
      },
      py::arg("program"), py::arg("edges"), py::arg("covered"));

  m.def(
      "gradient_check",
      [](uint64_t seed) {
        Rng rng(seed);
        ModelDims dims{10, 4, 4, kMutatorCount};
        ModelParams params = ModelParams::random_init(dims, rng);
        EncodedSample sample;
        sample.valid_len = 8;
        sample.tokens.assign(10, kPadToken);
        for (int i = 0; i < sample.valid_len; ++i)
          sample.tokens[static_cast<size_t>(i)] = static_cast<int>(rng.below(256));
        sample.mutator_token = static_cast<int>(rng.below(kMutatorCount));
        sample.param_norm = rng.unit();
        sample.label = static_cast<int>(rng.below(2));
        return finite_difference_check(params, sample, 1e-5, 200, rng);
      },
      py::arg("seed") = 1);

  m.def(
      "run_campaign",
      [](const std::string& target_text, const std::vector<py::bytes>& corpus,
         const std::string& mode, uint64_t rng_seed, uint64_t max_execs, uint64_t window_execs,
         uint64_t iter_limit, const std::vector<py::bytes>& tokens, int max_input_len) {
        TargetProgram program = parse_target(target_text);
        FuzzerConfig config;
        config.mode = mode_from_name(mode);
        config.rng_seed = rng_seed;
        config.max_execs = max_execs;
        config.window_execs = window_execs;
        config.iter_limit = iter_limit;
        config.max_input_len = max_input_len;
        std::vector<Bytes> seeds;
        seeds.reserve(corpus.size());
        for (const auto& input : corpus) seeds.push_back(to_bytes(input));
        CampaignResult result = run_campaign(config, program, seeds, dict_from_tokens(tokens));

        py::dict out;
        out["mutation_execs"] = result.mutation_execs;
        out["covered_blocks"] = result.covered_block_count;
        out["covered_edges"] = result.covered_edge_count;
        out["pool_size"] = result.pool.size();
        out["pipeline_runs"] = result.pipeline_runs;
        out["models_trained"] = result.counters.models_trained;
        py::list crashes;
        for (const auto& crash : result.crashes) {
          py::dict entry;
          entry["block"] = result.block_ids[static_cast<size_t>(crash.crash_block)];
          entry["exec_id"] = crash.exec_id;
          entry["input"] = from_bytes(crash.input);
          crashes.append(entry);
        }
        out["crashes"] = crashes;
        py::list criticals;
        for (int block : result.critical_blocks)
          criticals.append(result.block_ids[static_cast<size_t>(block)]);
        out["critical_blocks"] = criticals;
        out["final_critical_ratio"] =
            result.windows.empty() ? 0.0 : result.windows.back().critical_ratio();
        out["report"] = campaign_report_text(result);
        return out;
      },
      py::arg("target_text"), py::arg("corpus"), py::arg("mode") = "attuzz",
      py::arg("rng_seed") = 1, py::arg("max_execs") = 100000, py::arg("window_execs") = 100000,
      py::arg("iter_limit") = 50000, py::arg("tokens") = std::vector<py::bytes>{},
      py::arg("max_input_len") = 256);
}
