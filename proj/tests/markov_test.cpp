#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "heatfuzz/markov.hpp"

using namespace heatfuzz;
using testfix::Figure3;
using testfix::RandomDag;

TEST_SUITE_BEGIN("markov");

TEST_CASE("never-executed blocks get the uniform smoothed row") {
  TargetProgram program = parse_target(
      "init A\nblock A {\n  if byte[0] == 0 -> B\n  else -> C\n}\nblock B {\n}\nblock C {\n}\n");
  Cfg cfg = build_cfg(program);
  GlobalCoverage gc(3);
  Dtmc dtmc = estimate_dtmc(gc, cfg);
  CHECK(dtmc.prob(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(dtmc.prob(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("equal counts give equal probabilities") {
  // 499/499 over two edges: (1+499)/(998+2) each
  Cfg cfg;
  cfg.block_count = 3;
  cfg.ids = {"a", "b", "c"};
  cfg.successors.assign(3, {});
  cfg.pre_dominants.assign(3, {});
  cfg.add_dynamic_edge(0, 1);
  cfg.add_dynamic_edge(0, 2);
  GlobalCoverage gc(3);
  gc.add_edge_count(0, 1, 499);
  gc.add_edge_count(0, 2, 499);
  Dtmc dtmc = estimate_dtmc(gc, cfg);
  CHECK(dtmc.prob(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(dtmc.prob(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("worked example: transcribed counts reproduce the annotated chain") {
  Figure3 fig = Figure3::make();
  Dtmc dtmc = estimate_dtmc(fig.gc, fig.cfg);
  auto id = [&](const char* name) { return fig.program.index_of(name); };
  CHECK(dtmc.prob(id("B1"), id("B2")) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(dtmc.prob(id("B2"), id("B3")) == doctest::Approx(14.0 / 502.0).epsilon(1e-12));
  CHECK(dtmc.prob(id("B3"), id("B4")) == doctest::Approx(1.0 / 15.0).epsilon(1e-12));
  CHECK(dtmc.prob(id("B4"), id("B8")) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(dtmc.prob(id("B5"), id("B8")) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  for (int b = 0; b < 8; ++b) {
    if (dtmc.rows[static_cast<size_t>(b)].empty()) continue;
    CHECK(std::abs(dtmc.row_sum(b) - 1.0) < 1e-9);
  }
}

TEST_CASE("worked example: rewards match the annotated values within 5e-3") {
  Figure3 fig = Figure3::make();
  Dtmc dtmc = estimate_dtmc(fig.gc, fig.cfg);
  RewardVector rewards = solve_rewards(dtmc, fig.gc.covered());
  REQUIRE(rewards.converged);
  for (int b = 0; b < 8; ++b)
    CHECK(std::abs(rewards.reward[static_cast<size_t>(b)] -
                   fig.expected_rewards[static_cast<size_t>(b)]) < 5e-3);
}

TEST_CASE("sink rewards are the uncovered indicator, exactly") {
  Cfg cfg;
  cfg.block_count = 2;
  cfg.ids = {"a", "b"};
  cfg.successors.assign(2, {});
  cfg.pre_dominants.assign(2, {});
  cfg.add_dynamic_edge(0, 1);
  GlobalCoverage gc(2);
  gc.add_edge_count(0, 1, 10);
  Dtmc dtmc = estimate_dtmc(gc, cfg);

  BlockBitset covered(2);
  covered.set(0);
  RewardVector rewards = solve_rewards(dtmc, covered);
  CHECK(rewards.reward[1] == doctest::Approx(1.0).epsilon(1e-12));  // uncovered sink
  covered.set(1);
  rewards = solve_rewards(dtmc, covered);
  CHECK(rewards.reward[1] == 0.0);  // covered sink
}

TEST_CASE("non-convergence on a probability-one uncovered cycle is reported") {
  Cfg cfg;
  cfg.block_count = 2;
  cfg.ids = {"a", "b"};
  cfg.successors.assign(2, {});
  cfg.pre_dominants.assign(2, {});
  cfg.add_dynamic_edge(0, 1);
  cfg.add_dynamic_edge(1, 0);
  GlobalCoverage gc(2);
  Dtmc dtmc = estimate_dtmc(gc, cfg);  // single-successor rows have prob 1
  BlockBitset covered(2);
  RewardVector rewards = solve_rewards(dtmc, covered, 1e-9, 100000);
  CHECK_FALSE(rewards.converged);
  CHECK(rewards.residual > 0.0);
}

TEST_CASE("mc oracle: all-covered chains yield exactly zero") {
  Figure3 fig = Figure3::make();
  Dtmc dtmc = estimate_dtmc(fig.gc, fig.cfg);
  BlockBitset covered(8);
  for (int b = 0; b < 8; ++b) covered.set(b);
  Rng rng(1);
  McEstimate est = mc_reward_oracle(dtmc, covered, 0, 2000, rng);
  CHECK(est.mean == 0.0);
  CHECK(est.std_error == 0.0);
}

TEST_CASE("mc oracle: a single uncovered sink scores one with zero error") {
  Cfg cfg;
  cfg.block_count = 1;
  cfg.ids = {"s"};
  cfg.successors.assign(1, {});
  cfg.pre_dominants.assign(1, {});
  GlobalCoverage gc(1);
  Dtmc dtmc = estimate_dtmc(gc, cfg);
  BlockBitset covered(1);
  Rng rng(2);
  McEstimate est = mc_reward_oracle(dtmc, covered, 0, 1000, rng);
  CHECK(est.mean == 1.0);
  CHECK(est.std_error == 0.0);
}

TEST_CASE("mc oracle agrees with a hand-solved three-block chain") {
  // a -> b with p 2/3 (else stop is impossible: chain a->b->c deterministic
  // counts), all uncovered: reward(a) = 1 + p(ab)*(1 + p(bc)*1)
  Cfg cfg;
  cfg.block_count = 3;
  cfg.ids = {"a", "b", "c"};
  cfg.successors.assign(3, {});
  cfg.pre_dominants.assign(3, {});
  cfg.add_dynamic_edge(0, 1);
  cfg.add_dynamic_edge(1, 2);
  GlobalCoverage gc(3);
  gc.add_edge_count(0, 1, 1);
  gc.add_edge_count(1, 2, 1);
  Dtmc dtmc = estimate_dtmc(gc, cfg);
  double p = dtmc.prob(0, 1);
  REQUIRE(p == doctest::Approx(1.0).epsilon(1e-12));  // (1+1)/(1+1)
  BlockBitset covered(3);
  double expected = 1.0 + 1.0 * (1.0 + 1.0);
  RewardVector rewards = solve_rewards(dtmc, covered);
  CHECK(rewards.reward[0] == doctest::Approx(expected).epsilon(1e-9));
  Rng rng(3);
  McEstimate est = mc_reward_oracle(dtmc, covered, 0, 5000, rng);
  CHECK(est.mean == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("solver matches the mc oracle on random dags") {
  Rng rng(1);
  int failures = 0;
  for (int trial = 0; trial < 10; ++trial) {
    RandomDag dag = RandomDag::make(rng, 20);
    Dtmc dtmc = estimate_dtmc(dag.gc, dag.cfg);
    RewardVector rewards = solve_rewards(dtmc, dag.covered);
    REQUIRE(rewards.converged);
    for (int b = 0; b < dag.cfg.block_count; ++b) {
      // every uncovered block counts itself, so its reward is at least one
      if (!dag.covered.test(b))
        CHECK(rewards.reward[static_cast<size_t>(b)] >= 1.0 - 1e-9);
      McEstimate est = mc_reward_oracle(dtmc, dag.covered, b, 20000, rng);
      double tol = 3.0 * est.std_error + 1e-9;
      if (std::abs(est.mean - rewards.reward[static_cast<size_t>(b)]) > tol) ++failures;
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("reach probability of the init block is one") {
  Figure3 fig = Figure3::make();
  Dtmc dtmc = estimate_dtmc(fig.gc, fig.cfg);
  CHECK(reach_probability(dtmc, fig.program.init_index(), fig.program.init_index()) == 1.0);
}

TEST_CASE("reach probability of a one-step split is the edge probability") {
  Cfg cfg;
  cfg.block_count = 3;
  cfg.ids = {"a", "b", "c"};
  cfg.successors.assign(3, {});
  cfg.pre_dominants.assign(3, {});
  cfg.add_dynamic_edge(0, 1);
  cfg.add_dynamic_edge(0, 2);
  GlobalCoverage gc(3);
  gc.add_edge_count(0, 1, 499);
  gc.add_edge_count(0, 2, 499);
  Dtmc dtmc = estimate_dtmc(gc, cfg);
  CHECK(reach_probability(dtmc, 1, 0) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("reach probability matches monte-carlo hitting frequency") {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    RandomDag dag = RandomDag::make(rng, 14);
    Dtmc dtmc = estimate_dtmc(dag.gc, dag.cfg);
    int target = 1 + static_cast<int>(rng.below(static_cast<uint32_t>(dag.cfg.block_count - 1)));
    double analytic = reach_probability(dtmc, target, 0);
    const uint64_t walks = 100000;
    uint64_t hits = 0;
    for (uint64_t w = 0; w < walks; ++w) {
      int current = 0;
      bool hit = current == target;
      for (int step = 0; step < 1000 && !hit; ++step) {
        const auto& row = dtmc.rows[static_cast<size_t>(current)];
        if (row.empty()) break;
        double u = rng.unit();
        double acc = 0.0;
        int chosen = row.back().first;
        for (const auto& [succ, p] : row) {
          acc += p;
          if (u < acc) {
            chosen = succ;
            break;
          }
        }
        current = chosen;
        hit = current == target;
      }
      hits += hit ? 1 : 0;
    }
    double freq = static_cast<double>(hits) / static_cast<double>(walks);
    double se = std::sqrt(std::max(freq * (1.0 - freq), 1e-12) / static_cast<double>(walks));
    CHECK(std::abs(freq - analytic) <= 3.0 * se + 1e-3);
  }
}

TEST_CASE("critical selection on the warmed-up flag target picks the gate block") {
  TargetProgram program = parse_target(demo_target_source("motivating"));
  Cfg cfg = build_cfg(program);
  auto id = [&](const char* name) { return program.index_of(name); };
  GlobalCoverage gc(program.block_count());
  // Warm-up shape: most runs die at the first comparison, a few keep the flag
  // path alive; the magic gate never passes.
  gc.add_edge_count(id("L1"), id("L2"), 1000);
  gc.add_edge_count(id("L2"), id("L3"), 300);
  gc.add_edge_count(id("L2"), id("L9"), 700);
  gc.add_edge_count(id("L3"), id("L4"), 120);
  gc.add_edge_count(id("L3"), id("L9"), 180);
  gc.add_edge_count(id("L4"), id("L5"), 100);
  gc.add_edge_count(id("L4"), id("L9"), 20);
  gc.add_edge_count(id("L5"), id("L6"), 100);
  gc.add_edge_count(id("L6"), id("L9"), 100);
  Dtmc dtmc = estimate_dtmc(gc, cfg);
  RewardVector rewards = solve_rewards(dtmc, gc.covered());
  REQUIRE(rewards.converged);

  CriticalSelection selection = select_critical_blocks(rewards, gc.covered(), cfg, dtmc,
                                                       program.init_index(), 100.0, 0.5);
  // Both blocks behind the gate are uncovered and selected at k = 100%.
  CHECK(std::binary_search(selection.target_uncovered.begin(), selection.target_uncovered.end(),
                           id("L7")));
  CHECK(std::binary_search(selection.target_uncovered.begin(), selection.target_uncovered.end(),
                           id("L8")));
  REQUIRE(selection.critical == std::vector<int>{id("L6")});
  CHECK(selection.target_of[0] == std::vector<int>{id("L7")});

  // With the default k = 10% only the higher-reward block L7 remains targeted.
  CriticalSelection top = select_critical_blocks(rewards, gc.covered(), cfg, dtmc,
                                                 program.init_index(), 10.0, 0.5);
  CHECK(top.target_uncovered == std::vector<int>{id("L7")});
  CHECK(top.critical == std::vector<int>{id("L6")});
}

TEST_CASE("all-covered selection is empty") {
  Figure3 fig = Figure3::make();
  Dtmc dtmc = estimate_dtmc(fig.gc, fig.cfg);
  BlockBitset covered(8);
  for (int b = 0; b < 8; ++b) covered.set(b);
  RewardVector rewards = solve_rewards(dtmc, covered);
  CriticalSelection selection =
      select_critical_blocks(rewards, covered, fig.cfg, dtmc, 0, 10.0, 0.5);
  CHECK(selection.empty());
}

TEST_CASE("k_prime = 1 disables the probability filter") {
  Figure3 fig = Figure3::make();
  Dtmc dtmc = estimate_dtmc(fig.gc, fig.cfg);
  RewardVector rewards = solve_rewards(dtmc, fig.gc.covered());
  CriticalSelection strict = select_critical_blocks(rewards, fig.gc.covered(), fig.cfg, dtmc,
                                                    fig.program.init_index(), 100.0, 1e-9);
  CriticalSelection open = select_critical_blocks(rewards, fig.gc.covered(), fig.cfg, dtmc,
                                                  fig.program.init_index(), 100.0, 1.0);
  CHECK(strict.critical.empty());
  // every covered pre-dominant of an uncovered block qualifies
  auto id = [&](const char* name) { return fig.program.index_of(name); };
  CHECK(open.critical == std::vector<int>{id("B3"), id("B5")});
}

TEST_CASE("raising k or k_prime never shrinks the selection") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    RandomDag dag = RandomDag::make(rng, 16);
    Dtmc dtmc = estimate_dtmc(dag.gc, dag.cfg);
    RewardVector rewards = solve_rewards(dtmc, dag.covered);
    size_t last_targets = 0;
    for (double k : {10.0, 40.0, 70.0, 100.0}) {
      CriticalSelection sel = select_critical_blocks(rewards, dag.covered, dag.cfg, dtmc, 0, k, 0.5);
      CHECK(sel.target_uncovered.size() >= last_targets);
      last_targets = sel.target_uncovered.size();
    }
    size_t last_critical = 0;
    for (double kp : {0.1, 0.4, 0.7, 1.0}) {
      CriticalSelection sel =
          select_critical_blocks(rewards, dag.covered, dag.cfg, dtmc, 0, 50.0, kp);
      CHECK(sel.critical.size() >= last_critical);
      last_critical = sel.critical.size();
    }
  }
}

TEST_CASE("selection is invariant under positive reward scaling") {
  Rng rng(6);
  RandomDag dag = RandomDag::make(rng, 16);
  Dtmc dtmc = estimate_dtmc(dag.gc, dag.cfg);
  RewardVector rewards = solve_rewards(dtmc, dag.covered);
  RewardVector scaled = rewards;
  for (double& r : scaled.reward) r *= 37.5;
  CriticalSelection a = select_critical_blocks(rewards, dag.covered, dag.cfg, dtmc, 0, 30.0, 0.5);
  CriticalSelection b = select_critical_blocks(scaled, dag.covered, dag.cfg, dtmc, 0, 30.0, 0.5);
  CHECK(a.target_uncovered == b.target_uncovered);
  CHECK(a.critical == b.critical);
}

TEST_CASE("dtmc rows are strictly positive and sum to one") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    RandomDag dag = RandomDag::make(rng, 20);
    Dtmc dtmc = estimate_dtmc(dag.gc, dag.cfg);
    for (int b = 0; b < dag.cfg.block_count; ++b) {
      const auto& row = dtmc.rows[static_cast<size_t>(b)];
      if (row.empty()) continue;
      for (const auto& [succ, p] : row) CHECK(p > 0.0);
      CHECK(std::abs(dtmc.row_sum(b) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("rewards csv lists one row per block") {
  Figure3 fig = Figure3::make();
  Dtmc dtmc = estimate_dtmc(fig.gc, fig.cfg);
  RewardVector rewards = solve_rewards(dtmc, fig.gc.covered());
  CriticalSelection selection = select_critical_blocks(rewards, fig.gc.covered(), fig.cfg, dtmc,
                                                       fig.program.init_index(), 100.0, 0.5);
  std::string csv = rewards_csv(fig.cfg, fig.gc.covered(), rewards, dtmc,
                                fig.program.init_index(), selection);
  size_t lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 9);  // header + 8 blocks
  CHECK(csv.find("B4,0,") != std::string::npos);
}

TEST_SUITE_END();
