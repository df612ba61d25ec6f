// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. One line per criterion; the exit status is
// nonzero when any criterion fails or runs over its time budget.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "cli.hpp"
#include "zerotopo/cost.hpp"
#include "zerotopo/engine.hpp"

using namespace zerotopo;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> check;
};

double rel_err(double got, double want) { return std::abs(got / want - 1.0); }

ToyModel model_for(std::size_t psi, std::uint64_t seed) {
    ToyModelConfig c;
    c.psi = psi;
    return ToyModel(c, seed);
}

// Largest model on two Frontier nodes against the reported 68B and 55B.
Outcome max_model() {
    Outcome o;
    std::ostringstream out, err;
    const int code = cli::run({"maxmodel", "--nodes", "2", "--schemes", "zero3", "zeropp"}, out, err);
    o.require(code == 0, fmt::format("maxmodel exited {}", code));
    std::map<std::string, double> psi;
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string name;
        double v = 0;
        row >> name >> v;
        psi[name] = v;
    }
    o.require(psi.count("zero3") && psi.count("zeropp"), "missing rows");
    if (!o.ok) return o;
    const double e3 = rel_err(psi["zero3"], 68e9);
    const double epp = rel_err(psi["zeropp"], 55e9);
    o.detail = fmt::format("zero3 {:.1f}B ({:.1f}%), zeropp {:.1f}B ({:.1f}%)", psi["zero3"] / 1e9, e3 * 100,
                           psi["zeropp"] / 1e9, epp * 100);
    o.require(e3 <= 0.10 && epp <= 0.10, o.detail + " exceeds 10%");
    return o;
}

// Simulated ZeRO++ inter-node payload is a quarter of ZeRO-3's.
Outcome inter_node_ratio() {
    Outcome o;
    const ToyModel m = model_for(10'000, 1);
    std::string detail;
    for (std::size_t nodes : {2, 4}) {
        const Topology t = builtin_frontier(nodes);
        const auto z3 = run_training(make_plan(Scheme::ZeRO3, t), m, 1, TrainingConfig::exact());
        const auto pp = run_training(make_plan(Scheme::ZeROpp, t), m, 1, TrainingConfig::quantized(Scheme::ZeROpp));
        const double ratio = static_cast<double>(pp.ledger.payload(LinkClass::InterNode)) /
                             static_cast<double>(z3.ledger.payload(LinkClass::InterNode));
        detail += fmt::format("{}N {:.4f} ", nodes, ratio);
        o.require(std::abs(ratio - 0.25) <= 0.01, fmt::format("ratio {} on {} nodes", ratio, nodes));
    }
    if (o.ok) o.detail = detail;
    return o;
}

// Ledger equals the analytic volumes for every scheme, topology and mode.
Outcome reconcile_matrix() {
    Outcome o;
    int runs = 0;
    const ToyModel m = model_for(10'000, 2);
    const std::vector<std::pair<std::string, Topology>> topologies = {
        {"frontier1", builtin_frontier(1)}, {"frontier2", builtin_frontier(2)}, {"dgx2", builtin_dgx(2)}};
    for (Scheme s : {Scheme::ZeRO3, Scheme::ZeROpp, Scheme::ZeROtopo}) {
        for (const auto& [name, t] : topologies) {
            for (bool quantized : {false, true}) {
                const ShardingPlan p = make_plan(s, t);
                const TrainingConfig cfg = quantized ? TrainingConfig::quantized(s) : TrainingConfig::exact();
                Simulation sim(p, m, cfg);
                for (int i = 0; i < 2; ++i) sim.run_step();
                const ModelSpec padded{static_cast<double>(sim.layout().padded_total()), 2};
                const ReconcileReport r = reconcile(step_cost(p, padded, cfg.quant), sim.fabric().ledger());
                o.require(r.ok(), fmt::format("{} {} {}: {}", to_string(s), name,
                                              quantized ? "quantized" : "exact", r.describe()));
                ++runs;
            }
        }
    }
    if (o.ok) o.detail = fmt::format("{} runs, zero delta", runs);
    return o;
}

// ZeRO-topo weight traffic stays on the GCD pair (sec 2) or inside the node (sec 8).
Outcome topology_discipline() {
    Outcome o;
    const ToyModel m = model_for(10'000, 3);
    for (std::size_t sec : {2, 8}) {
        for (std::size_t nodes : {1, 2, 4}) {
            const ShardingPlan p = make_plan(Scheme::ZeROtopo, builtin_frontier(nodes), sec);
            const auto r = run_training(p, m, 1, TrainingConfig::quantized(Scheme::ZeROtopo));
            const auto& l = r.ledger;
            const std::string where = fmt::format("sec {} nodes {}", sec, nodes);
            o.require(l.at(LinkClass::IntraNode, Phase::ForwardAG).payload_bytes == 0 &&
                          l.at(LinkClass::InterNode, Phase::ForwardAG).payload_bytes == 0,
                      where + ": forward gather left the GCD pair");
            o.require(l.at(LinkClass::InterNode, Phase::BackwardAG).payload_bytes == 0,
                      where + ": backward gather crossed nodes");
            if (sec == 2) {
                o.require(l.at(LinkClass::IntraNode, Phase::BackwardAG).payload_bytes == 0,
                          where + ": backward gather left the GCD pair");
            }
            o.require(l.at(LinkClass::InterNode, Phase::GradRS).payload_bytes == 0,
                      where + ": gradient reduce-scatter crossed nodes");
            if (nodes == 1) o.require(l.payload(LinkClass::InterNode) == 0, where + ": inter-node traffic");
        }
    }
    if (o.ok) o.detail = "sec 2 and 8 on 1, 2, 4 nodes";
    return o;
}

// Exact mode matches the single-worker oracle bit for bit.
Outcome exact_equivalence() {
    Outcome o;
    const Topology t = builtin_frontier(2);
    for (std::uint64_t seed : {1, 2, 3}) {
        const ToyModel m = model_for(100'000, seed);
        const TrainingResult want = baseline_single_worker(m, 100, ReductionLayout::of(t));
        for (Scheme s : {Scheme::ZeRO3, Scheme::ZeROpp, Scheme::ZeROtopo}) {
            const TrainingResult got = run_training(make_plan(s, t), m, 100, TrainingConfig::exact());
            o.require(got.losses == want.losses && got.param_digests == want.param_digests &&
                          got.final_params == want.final_params,
                      fmt::format("{} seed {} diverges from the oracle", to_string(s), seed));
        }
    }
    if (o.ok) o.detail = "3 schemes x 3 seeds x 100 steps identical";
    return o;
}

// Quantization error stays within half a block scale, alone and inside collectives.
Outcome quantization_bounds() {
    Outcome o;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> mag(-6.0, 4.0);
    std::size_t elements = 0;
    double worst = 0.0;  // error / (scale / 2)
    for (int bits : {8, 4}) {
        for (std::size_t bs : {std::size_t{64}, std::size_t{256}, std::size_t{1000}}) {
            std::vector<double> x(100'003);
            for (auto& v : x) {
                const double a = std::pow(10.0, mag(rng));
                v = std::uniform_real_distribution<double>(-a, a)(rng);
            }
            const QuantizedTensor q = quantize_blocks(x, bits, bs);
            const auto d = dequantize_blocks(q);
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double half = q.scale_of(i) / 2;
                const double err = std::abs(d[i] - x[i]);
                o.require(err <= half * (1 + 1e-12), fmt::format("element {} error {} > {}", i, err, half));
                if (half > 0) worst = std::max(worst, err / half);
            }
            elements += x.size();
        }
    }

    const Topology t = builtin_frontier(1);
    Fabric f(t);
    const Group g(t, {0, 1, 2, 3, 4, 5, 6, 7});
    std::vector<std::vector<double>> v(8, std::vector<double>(8 * 4096));
    std::normal_distribution<double> normal;
    for (auto& b : v) {
        for (auto& e : b) e = normal(rng);
    }
    const auto ag = f.q_allgather(g, v, 8, Phase::BackwardAG);
    for (std::size_t to = 0; to < 8; ++to) {
        for (std::size_t from = 0; from < 8; ++from) {
            if (from == to) continue;
            const QuantizedTensor q = quantize_blocks(v[from], 8);
            for (std::size_t i = 0; i < v[from].size(); ++i) {
                const double err = std::abs(ag[to][from * v[from].size() + i] - v[from][i]);
                o.require(err <= q.scale_of(i) / 2 * (1 + 1e-12), "q_allgather bound");
            }
        }
    }
    const auto rs = f.q_reduce_scatter_1hop(g, v, 4, Phase::GradRS);
    const std::size_t chunk = v[0].size() / 8;
    for (std::size_t k = 0; k < 8; ++k) {
        std::vector<QuantizedTensor> sent(8);
        for (std::size_t m = 0; m < 8; ++m) {
            if (m != k) sent[m] = quantize_blocks(std::span<const double>(v[m]).subspan(k * chunk, chunk), 4);
        }
        for (std::size_t e = 0; e < chunk; ++e) {
            double exact = 0.0, bound = 0.0, mag_sum = 0.0;
            for (std::size_t m = 0; m < 8; ++m) {
                exact += v[m][k * chunk + e];
                mag_sum += std::abs(v[m][k * chunk + e]);
                if (m != k) bound += sent[m].scale_of(e) / 2;
            }
            o.require(std::abs(rs[k][e] - exact) <= bound + mag_sum * 1e-12, "q_reduce_scatter_1hop bound");
        }
    }
    elements += 2 * 8 * v[0].size();
    if (o.ok) o.detail = fmt::format("{} elements, worst {:.4f} of the bound", elements, worst);
    return o;
}

// Quantized ZeRO-topo training tracks the unquantized baseline.
Outcome convergence() {
    Outcome o;
    const Topology t = builtin_frontier(2);
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        const ToyModel m = model_for(100'000, seed);
        const double base = baseline_single_worker(m, 200, ReductionLayout::of(t)).losses.back();
        const double topo = run_training(make_plan(Scheme::ZeROtopo, t), m, 200,
                                         TrainingConfig::quantized(Scheme::ZeROtopo))
                                .losses.back();
        const double e = rel_err(topo, base);
        detail += fmt::format("seed {} {:.2f}% ", seed, e * 100);
        o.require(std::isfinite(topo) && e <= 0.05, fmt::format("seed {}: {} vs baseline {}", seed, topo, base));
    }
    if (o.ok) o.detail = detail;
    return o;
}

// Estimated step time orders ZeRO-topo < ZeRO++ < ZeRO-3, and ZeRO-topo
// weight and gradient groups do not grow with the node count.
Outcome cost_ordering() {
    Outcome o;
    const ModelSpec m{20e9, 2};
    std::string detail;
    for (std::size_t n : {2, 4, 48}) {
        const Topology t = builtin_frontier(n);
        const double topo = step_cost(make_plan(Scheme::ZeROtopo, t), m).total_time;
        const double pp = step_cost(make_plan(Scheme::ZeROpp, t), m).total_time;
        const double z3 = step_cost(make_plan(Scheme::ZeRO3, t), m).total_time;
        detail += fmt::format("{}N {:.3f}<{:.3f}<{:.3f}s ", n, topo, pp, z3);
        o.require(topo < pp && pp < z3, fmt::format("ordering fails on {} nodes", n));
    }
    for (std::size_t n = 1; n <= 48; ++n) {
        const ShardingPlan p = make_plan(Scheme::ZeROtopo, builtin_frontier(n));
        o.require(weight_ag_cost(p, m, GatherPass::Forward).d == 2 &&
                      weight_ag_cost(p, m, GatherPass::Backward).d == 2 && grad_rs_cost(p, m).d == 8,
                  fmt::format("group size grows at {} nodes", n));
    }
    if (o.ok) o.detail = detail;
    return o;
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "max model size", 1.0, max_model},
        {2, "inter-node ratio", 10.0, inter_node_ratio},
        {3, "ledger reconciliation", 60.0, reconcile_matrix},
        {4, "topology discipline", 10.0, topology_discipline},
        {5, "exact equivalence", 60.0, exact_equivalence},
        {6, "quantization bounds", 30.0, quantization_bounds},
        {7, "convergence", 120.0, convergence},
        {8, "cost ordering", 1.0, cost_ordering},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (o.ok && secs > c.budget_s) {
            o.ok = false;
            o.detail += fmt::format(" over budget");
        }
        while (!o.detail.empty() && o.detail.back() == ' ') o.detail.pop_back();
        failed += o.ok ? 0 : 1;
        std::cout << fmt::format("[{}] {} {} ({:.2f}s of {:.0f}s) {}\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs,
                                 c.budget_s, o.detail)
                  << std::flush;
    }
    return failed == 0 ? 0 : 1;
}
