// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "zerotopo/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>
#include <stdexcept>

#include <fmt/core.h>

#include "zerotopo/error.hpp"
#include "zerotopo/half.hpp"

namespace zerotopo {

void adam_step(OptimizerShard& os, std::span<const double> grad, const AdamHyper& h) {
    const std::size_t n = os.master.size();
    if (grad.size() != n || os.m.size() != n || os.v.size() != n) {
        throw std::invalid_argument(fmt::format("adam_step: shard of {} elements, gradient of {}", n,
                                                grad.size()));
    }
    ++os.step_count;
    const double t = static_cast<double>(os.step_count);
    const double c1 = 1.0 - std::pow(h.beta1, t);
    const double c2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        os.m[i] = h.beta1 * os.m[i] + (1.0 - h.beta1) * g;
        os.v[i] = h.beta2 * os.v[i] + (1.0 - h.beta2) * g * g;
        const double m_hat = os.m[i] / c1;
        const double v_hat = os.v[i] / c2;
        os.master[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
        if (!std::isfinite(os.master[i])) {
            throw NumericError(i, fmt::format("adam_step: non-finite update at element {}", i));
        }
    }
}

std::span<const double> select_matching_gradients(IndexRange held, std::span<const double> grads,
                                                  IndexRange os) {
    if (grads.size() != held.size()) {
        throw std::invalid_argument(fmt::format("held range [{}, {}) does not match {} gradients",
                                                held.begin, held.end, grads.size()));
    }
    if (!held.contains(os)) {
        throw std::out_of_range(fmt::format("optimizer range [{}, {}) not covered by held gradients "
                                            "[{}, {})",
                                            os.begin, os.end, held.begin, held.end));
    }
    return grads.subspan(os.begin - held.begin, os.size());
}

StepSchedule make_schedule(const ShardingPlan& plan, const QuantConfig& q) {
    const std::size_t w = plan.weight_degree();
    const std::size_t g = plan.grad_degree();
    const std::size_t o = plan.os_degree();
    const int wbits = q.weights_int8 ? 8 : 0;
    const std::size_t bwd = plan.has_secondary() ? plan.secondary_degree : w;
    return {
        {Phase::ForwardAG, w, wbits, w > 1},
        {Phase::BackwardAG, bwd, wbits, bwd > 1},
        {Phase::GradRS, g, q.grads_int4 ? 4 : 0, g > 1},
        {Phase::GradAR, o / g, 0, o / g > 1},
        {Phase::PostUpdateAG, o / w, 0, o > w},
    };
}

void write_loss_trace(std::ostream& os, const LossTrace& trace) {
    for (double v : trace) os << fmt::format("{:.17g}\n", v);
}

std::uint64_t digest(std::span<const double> values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

double hierarchical_sum(std::span<const double> values, std::size_t per_node) {
    if (values.empty()) return 0.0;
    if (per_node == 0) throw std::invalid_argument("hierarchical_sum: per_node must be >= 1");
    double total = 0.0;
    for (std::size_t start = 0; start < values.size(); start += per_node) {
        const std::size_t stop = std::min(values.size(), start + per_node);
        double partial = values[start];
        for (std::size_t i = start + 1; i < stop; ++i) partial += values[i];
        total = start == 0 ? partial : total + partial;
    }
    return total;
}

namespace {

FabricOptions fabric_options(const TrainingConfig& cfg) {
    if (cfg.param_width < 1) throw ConfigError("param_width", "param_width must be >= 1");
    FabricOptions o;
    o.element_width = static_cast<std::size_t>(cfg.param_width);
    o.block_size = cfg.quant.block_size;
    o.scale_width = cfg.quant.scale_width;
    return o;
}

template <typename Fn>
auto with_step(std::size_t step, Fn&& fn) {
    try {
        return fn();
    } catch (const NumericError& e) {
        throw NumericError(step, fmt::format("step {}: {}", step, e.what()));
    }
}

}  // namespace

Simulation::Simulation(ShardingPlan plan, const ToyModel& model, TrainingConfig cfg)
    : mPlan(std::move(plan)),
      mModel(model),
      mCfg(cfg),
      mLayout(mPlan, model.num_params(), model.config().groups),
      mSchedule(make_schedule(mPlan, cfg.quant)),
      mFabric(mPlan.topology, fabric_options(cfg)) {
    if (auto report = validate_dependency(mPlan); !report) {
        throw ConfigError("scheme", fmt::format("plan violates dependency rule: {}", report.violation));
    }
    if (cfg.quant.block_size == 0) throw ConfigError("block_size", "block_size must be >= 1");
    if (cfg.mixed_precision && !(cfg.loss_scale > 0.0)) {
        throw ConfigError("loss_scale", "loss_scale must be positive");
    }

    const std::size_t groups = mLayout.groups();
    std::vector<std::vector<double>> init(groups);
    pad_into(model.initial_params(), init);

    mWorkers.resize(mLayout.devices());
    for (std::size_t r = 0; r < mWorkers.size(); ++r) {
        WorkerState& w = mWorkers[r];
        w.rank = r;
        w.device = mPlan.topology.device(r);
        w.primary.resize(groups);
        w.secondary.resize(groups);
        w.secondary_q.resize(groups);
        w.grad_shard.resize(groups);
        w.os.resize(groups);
        for (std::size_t g = 0; g < groups; ++g) {
            const IndexRange p = mLayout.primary_range(r, g);
            w.primary[g].assign(init[g].begin() + p.begin, init[g].begin() + p.end);
            round_working(w.primary[g]);
            const IndexRange o = mLayout.os_range(r, g);
            w.os[g].master.assign(init[g].begin() + o.begin, init[g].begin() + o.end);
            w.os[g].m.assign(o.size(), 0.0);
            w.os[g].v.assign(o.size(), 0.0);
        }
    }
}

void Simulation::round_working(std::vector<double>& v) const {
    if (mCfg.mixed_precision) half_round_inplace(v);
}

std::vector<double> Simulation::unpad(const std::vector<std::vector<double>>& groups) const {
    std::vector<double> flat(mLayout.psi());
    for (std::size_t g = 0; g < mLayout.groups(); ++g) {
        const IndexRange real = mLayout.real_range(g);
        std::copy_n(groups[g].begin(), real.size(), flat.begin() + real.begin);
    }
    return flat;
}

void Simulation::pad_into(std::span<const double> flat, std::vector<std::vector<double>>& groups) const {
    groups.resize(mLayout.groups());
    for (std::size_t g = 0; g < mLayout.groups(); ++g) {
        const IndexRange real = mLayout.real_range(g);
        groups[g].assign(mLayout.padded_length(g), 0.0);
        std::copy_n(flat.begin() + real.begin, real.size(), groups[g].begin());
    }
}

Simulation::Views Simulation::gather_primaries(Phase ph, bool quantized) {
    Views views(mWorkers.size(), std::vector<std::vector<double>>(mLayout.groups()));
    for (std::size_t g = 0; g < mLayout.groups(); ++g) {
        for (const Group& grp : mLayout.weight_groups()) {
            if (grp.size() == 1) {
                views[grp.rank(0)][g] = mWorkers[grp.rank(0)].primary[g];
                continue;
            }
            std::vector<std::vector<double>> shards;
            shards.reserve(grp.size());
            for (std::size_t r : grp.ranks()) shards.push_back(mWorkers[r].primary[g]);
            auto out = quantized ? mFabric.q_allgather(grp, shards, 8, ph) : mFabric.allgather(grp, shards, ph);
            for (std::size_t i = 0; i < grp.size(); ++i) views[grp.rank(i)][g] = std::move(out[i]);
        }
    }
    return views;
}

Simulation::Views Simulation::gather_secondaries() {
    Views views(mWorkers.size(), std::vector<std::vector<double>>(mLayout.groups()));
    for (std::size_t g = 0; g < mLayout.groups(); ++g) {
        for (const Group& grp : mLayout.secondary_groups()) {
            Fabric::Buffers out;
            if (mWorkers[grp.rank(0)].secondary_q[g]) {
                std::vector<QuantizedTensor> shards;
                for (std::size_t r : grp.ranks()) shards.push_back(*mWorkers[r].secondary_q[g]);
                out = mFabric.allgather_quantized(grp, shards, Phase::BackwardAG);
            } else {
                std::vector<std::vector<double>> shards;
                for (std::size_t r : grp.ranks()) shards.push_back(mWorkers[r].secondary[g]);
                out = mCfg.quant.weights_int8 ? mFabric.q_allgather(grp, shards, 8, Phase::BackwardAG)
                                              : mFabric.allgather(grp, shards, Phase::BackwardAG);
            }
            for (std::size_t i = 0; i < grp.size(); ++i) {
                const std::size_t r = grp.rank(i);
                views[r][g] = std::move(out[i]);
                mWorkers[r].secondary[g].clear();
                mWorkers[r].secondary_q[g].reset();
            }
        }
    }
    return views;
}

double Simulation::run_step() {
    const std::size_t step = mStep;
    const std::size_t devices = mWorkers.size();
    const std::size_t groups = mLayout.groups();
    const bool q_w = mCfg.quant.weights_int8;
    TrafficLedger& ledger = mFabric.ledger();
    ledger.begin_step();
    struct StepGuard {
        TrafficLedger& l;
        ~StepGuard() {
            if (l.in_step()) l.end_step();
        }
    } guard{ledger};

    // Forward.
    std::vector<ToyModel::Activations> acts(devices);
    std::vector<double> losses(devices);
    {
        Views views = gather_primaries(Phase::ForwardAG, q_w);
        for (std::size_t r = 0; r < devices; ++r) {
            const auto [begin, end] = mModel.micro_batch(r, devices);
            losses[r] = mModel.forward(unpad(views[r]), begin, end, acts[r]);
        }
        if (mPlan.has_secondary()) {
            const bool keep_quantized = q_w && mPlan.scheme == Scheme::ZeROtopo;
            for (std::size_t r = 0; r < devices; ++r) {
                for (std::size_t g = 0; g < groups; ++g) {
                    const IndexRange s = mLayout.secondary_range(r, g);
                    std::span<const double> slice(views[r][g].data() + s.begin, s.size());
                    if (keep_quantized) {
                        mWorkers[r].secondary_q[g] = quantize_blocks(slice, 8, mCfg.quant.block_size);
                    } else {
                        mWorkers[r].secondary[g].assign(slice.begin(), slice.end());
                    }
                }
            }
        }
    }
    const double loss = hierarchical_sum(losses, mPlan.topology.devices_per_node());
    if (!std::isfinite(loss)) throw NumericError(step, fmt::format("non-finite loss at step {}", step));

    // Backward.
    const double scale = mCfg.mixed_precision ? mCfg.loss_scale : 1.0;
    std::vector<std::vector<std::vector<double>>> grads(devices);
    {
        Views views = mPlan.has_secondary() ? gather_secondaries() : gather_primaries(Phase::BackwardAG, q_w);
        for (std::size_t r = 0; r < devices; ++r) {
            std::vector<double> full(mLayout.psi(), 0.0);
            mModel.backward(unpad(views[r]), acts[r], scale, full);
            views[r].clear();
            acts[r] = {};
            pad_into(full, grads[r]);
            if (mCfg.mixed_precision) {
                with_step(step, [&] {
                    for (auto& v : grads[r]) half_round_inplace(v);
                    return 0;
                });
            }
        }
    }

    // Gradient reduce-scatter within the gradient group.
    for (std::size_t g = 0; g < groups; ++g) {
        for (const Group& grp : mLayout.grad_groups()) {
            if (grp.size() == 1) {
                mWorkers[grp.rank(0)].grad_shard[g] = std::move(grads[grp.rank(0)][g]);
                continue;
            }
            std::vector<std::vector<double>> vecs;
            vecs.reserve(grp.size());
            for (std::size_t r : grp.ranks()) vecs.push_back(std::move(grads[r][g]));
            auto out = mCfg.quant.grads_int4 ? mFabric.q_reduce_scatter_1hop(grp, vecs, 4, Phase::GradRS)
                                             : mFabric.reduce_scatter(grp, vecs, Phase::GradRS);
            for (std::size_t i = 0; i < grp.size(); ++i) {
                mWorkers[grp.rank(i)].grad_shard[g] = std::move(out[i]);
            }
        }
    }
    grads.clear();
    with_step(step, [&] {
        for (auto& w : mWorkers) {
            for (auto& v : w.grad_shard) round_working(v);
        }
        return 0;
    });

    // Allreduce of matching gradient slices across replicas.
    if (mLayout.replica_degree() > 1) {
        for (std::size_t g = 0; g < groups; ++g) {
            for (const Group& grp : mLayout.replica_groups()) {
                std::vector<std::vector<double>> vecs;
                for (std::size_t r : grp.ranks()) vecs.push_back(mWorkers[r].grad_shard[g]);
                auto out = mFabric.allreduce(grp, vecs, Phase::GradAR);
                for (std::size_t i = 0; i < grp.size(); ++i) {
                    mWorkers[grp.rank(i)].grad_shard[g] = std::move(out[i]);
                }
            }
        }
        with_step(step, [&] {
            for (auto& w : mWorkers) {
                for (auto& v : w.grad_shard) round_working(v);
            }
            return 0;
        });
    }

    // Optimizer update on the matching slice; everything else is dropped.
    std::vector<std::vector<std::vector<double>>> working(devices, std::vector<std::vector<double>>(groups));
    with_step(step, [&] {
        std::vector<double> unscaled;
        for (std::size_t r = 0; r < devices; ++r) {
            WorkerState& w = mWorkers[r];
            for (std::size_t g = 0; g < groups; ++g) {
                auto slice = select_matching_gradients(mLayout.grad_range(r, g), w.grad_shard[g],
                                                       mLayout.os_range(r, g));
                if (scale != 1.0) {
                    unscaled.assign(slice.begin(), slice.end());
                    for (double& x : unscaled) x /= scale;
                    slice = unscaled;
                }
                adam_step(w.os[g], slice, mCfg.adam);
                w.grad_shard[g].clear();
                working[r][g] = w.os[g].master;
                round_working(working[r][g]);
            }
        }
        return 0;
    });

    // Updated weights back into primary slices.
    for (std::size_t g = 0; g < groups; ++g) {
        if (mLayout.post_update_groups().empty()) {
            for (std::size_t r = 0; r < devices; ++r) mWorkers[r].primary[g] = std::move(working[r][g]);
            continue;
        }
        for (const Group& grp : mLayout.post_update_groups()) {
            std::vector<std::vector<double>> shards;
            for (std::size_t r : grp.ranks()) shards.push_back(std::move(working[r][g]));
            auto out = mFabric.allgather(grp, shards, Phase::PostUpdateAG);
            for (std::size_t i = 0; i < grp.size(); ++i) mWorkers[grp.rank(i)].primary[g] = std::move(out[i]);
        }
    }

    ledger.end_step();
    ++mStep;
    return loss;
}

std::vector<double> Simulation::parameters(std::size_t replica) const {
    if (replica >= replica_count()) throw std::out_of_range("parameters: replica out of range");
    const std::size_t w = mLayout.weight_degree();
    std::vector<std::vector<double>> padded(mLayout.groups());
    for (std::size_t g = 0; g < mLayout.groups(); ++g) {
        for (std::size_t i = 0; i < w; ++i) {
            const auto& p = mWorkers[replica * w + i].primary[g];
            padded[g].insert(padded[g].end(), p.begin(), p.end());
        }
    }
    return unpad(padded);
}

TrainingResult run_training(const ShardingPlan& plan, const ToyModel& model, std::size_t steps,
                            const TrainingConfig& cfg) {
    Simulation sim(plan, model, cfg);
    TrainingResult res;
    res.losses.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        res.losses.push_back(sim.run_step());
        res.param_digests.push_back(digest(sim.parameters()));
    }
    res.ledger = sim.fabric().ledger();
    res.final_params = sim.parameters();
    return res;
}

TrainingResult baseline_single_worker(const ToyModel& model, std::size_t steps,
                                      const ReductionLayout& layout, const AdamHyper& adam) {
    if (layout.ranks == 0 || layout.ranks_per_node == 0) {
        throw std::invalid_argument("baseline_single_worker: empty reduction layout");
    }
    const std::size_t n = model.num_params();
    OptimizerShard os;
    os.master = model.initial_params();
    os.m.assign(n, 0.0);
    os.v.assign(n, 0.0);

    TrainingResult res;
    std::vector<ToyModel::Activations> acts(layout.ranks);
    std::vector<double> losses(layout.ranks);
    std::vector<std::vector<double>> per_rank(layout.ranks);
    std::vector<double> total(n), partial(n);
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t r = 0; r < layout.ranks; ++r) {
            const auto [begin, end] = model.micro_batch(r, layout.ranks);
            losses[r] = model.forward(os.master, begin, end, acts[r]);
        }
        const double loss = hierarchical_sum(losses, layout.ranks_per_node);
        if (!std::isfinite(loss)) throw NumericError(step, fmt::format("non-finite loss at step {}", step));
        for (std::size_t r = 0; r < layout.ranks; ++r) {
            per_rank[r].assign(n, 0.0);
            model.backward(os.master, acts[r], 1.0, per_rank[r]);
        }
        for (std::size_t start = 0; start < layout.ranks; start += layout.ranks_per_node) {
            const std::size_t stop = std::min(layout.ranks, start + layout.ranks_per_node);
            std::vector<double>& acc = start == 0 ? total : partial;
            acc = per_rank[start];
            for (std::size_t r = start + 1; r < stop; ++r) {
                for (std::size_t i = 0; i < n; ++i) acc[i] += per_rank[r][i];
            }
            if (start != 0) {
                for (std::size_t i = 0; i < n; ++i) total[i] += partial[i];
            }
        }
        with_step(step, [&] {
            adam_step(os, total, adam);
            return 0;
        });
        res.losses.push_back(loss);
        res.param_digests.push_back(digest(os.master));
    }
    res.final_params = os.master;
    return res;
}

}  // namespace zerotopo
