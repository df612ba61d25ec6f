// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "zerotopo/cost.hpp"
#include "zerotopo/engine.hpp"
#include "zerotopo/error.hpp"
#include "zerotopo/plan.hpp"
#include "zerotopo/topology.hpp"

namespace zerotopo::cli {

namespace {

struct RunConfig {
    std::string builtin = "frontier";
    std::size_t nodes = 1;
    std::string topology_file;
    std::string scheme;
    std::vector<std::string> schemes;
    std::size_t sec = 0;
    double psi = 0.0;
    std::string optimizer = "adam";
    int param_width = 2;
    double alpha = 0.0;
    double capacity = 64e9;
    std::size_t steps = 100;
    std::uint64_t seed = 1;
    std::size_t hidden = 16;
    std::size_t samples = 128;
    std::size_t groups = 4;
    double lr = 1e-4;
    bool exact = false;
    std::string weights_int8 = "default";
    std::string grads_int4 = "default";
    std::string mixed = "default";
    std::string trace_path = "loss_trace.txt";
    std::string ledger_path = "ledger.tsv";
    std::string format = "tsv";
};

Topology resolve_topology(const RunConfig& c) {
    if (!c.topology_file.empty()) return load_topology_file(c.topology_file);
    if (c.builtin == "frontier") return builtin_frontier(c.nodes);
    return builtin_dgx(c.nodes);
}

double checked_psi(double psi) {
    if (!std::isfinite(psi) || psi <= 0.0) throw ConfigError("psi", "psi must be a positive parameter count");
    return psi;
}

std::string bytes_str(double v) { return fmt::format("{}", static_cast<long long>(std::llround(v))); }

/// Renders rows either as TSV or as a markdown table.
std::string render(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                   const std::string& format) {
    std::string out;
    auto join = [](const std::vector<std::string>& cells, const char* sep) {
        std::string s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) s += sep;
            s += cells[i];
        }
        return s;
    };
    if (format == "markdown") {
        out += "| " + join(header, " | ") + " |\n|";
        for (std::size_t i = 0; i < header.size(); ++i) out += "---|";
        out += "\n";
        for (const auto& r : rows) out += "| " + join(r, " | ") + " |\n";
    } else {
        out += join(header, "\t") + "\n";
        for (const auto& r : rows) out += join(r, "\t") + "\n";
    }
    return out;
}

std::size_t sec_for(Scheme s, const RunConfig& c) { return s == Scheme::ZeROtopo ? c.sec : 0; }

int cmd_plan(const RunConfig& c, std::ostream& out) {
    const Topology t = resolve_topology(c);
    const ShardingPlan plan = make_plan(parse_scheme(c.scheme), t, c.sec);
    const ModelSpec m{checked_psi(c.psi), c.param_width};
    const OptimizerSpec o = parse_optimizer(c.optimizer);

    const std::string name(to_string(plan.scheme));
    const double parts[] = {weight_mem_per_device(plan, m), grad_mem_per_device(plan, m),
                            optimizer_mem_per_device(plan, m, o), total_model_state_mem(plan, m, o)};
    const char* labels[] = {"weights", "gradients", "optimizer", "total"};
    std::vector<std::vector<std::string>> rows;
    for (int i = 0; i < 4; ++i) {
        rows.push_back({name, labels[i], bytes_str(parts[i]), fmt::format("{:.4f}", parts[i] / m.psi)});
    }
    out << render({"scheme", "component", "bytes_per_device", "bytes_per_param"}, rows, c.format);
    out << "\n";

    const StepCostReport report = step_cost(plan, m, c.alpha);
    out << (c.format == "markdown" ? to_markdown(report) : to_tsv(report));
    return kExitOk;
}

std::vector<Scheme> parse_schemes(const std::vector<std::string>& names) {
    std::vector<Scheme> out;
    for (const auto& n : names) out.push_back(parse_scheme(n));
    return out;
}

int cmd_maxmodel(const RunConfig& c, std::ostream& out) {
    if (!std::isfinite(c.capacity) || c.capacity <= 0.0) {
        throw ConfigError("capacity", "capacity must be a positive byte count");
    }
    const Topology t = resolve_topology(c);
    const OptimizerSpec o = parse_optimizer(c.optimizer);
    std::vector<std::vector<std::string>> rows;
    for (Scheme s : parse_schemes(c.schemes)) {
        const ShardingPlan plan = make_plan(s, t, sec_for(s, c));
        const std::uint64_t psi = max_model_size(plan, c.capacity, o, c.param_width);
        rows.push_back({std::string(to_string(s)), fmt::format("{}", psi),
                        fmt::format("{:.3f}", static_cast<double>(psi) / 1e9)});
    }
    out << render({"scheme", "psi_max", "psi_max_billions"}, rows, c.format);
    return kExitOk;
}

bool on_off(const std::string& v, bool fallback) { return v == "default" ? fallback : v == "on"; }

TrainingConfig training_config(Scheme s, const RunConfig& c) {
    TrainingConfig cfg = c.exact ? TrainingConfig::exact() : TrainingConfig::quantized(s);
    if (!c.exact && !cfg.quant.any()) cfg.mixed_precision = false;
    cfg.quant.weights_int8 = on_off(c.weights_int8, cfg.quant.weights_int8);
    cfg.quant.grads_int4 = on_off(c.grads_int4, cfg.quant.grads_int4);
    cfg.mixed_precision = on_off(c.mixed, cfg.mixed_precision);
    if (!(c.lr > 0.0)) throw ConfigError("lr", "learning rate must be positive");
    cfg.adam.lr = c.lr;
    cfg.param_width = c.param_width;
    return cfg;
}

int cmd_simulate(const RunConfig& c, std::ostream& out) {
    const Topology t = resolve_topology(c);
    const Scheme scheme = parse_scheme(c.scheme);
    const ShardingPlan plan = make_plan(scheme, t, c.sec);
    const double psi = checked_psi(c.psi == 0.0 ? 1e5 : c.psi);
    if (psi != std::floor(psi) || psi > 1e9) throw ConfigError("psi", "simulated psi must be an integer <= 1e9");

    ToyModelConfig mc;
    mc.psi = static_cast<std::size_t>(psi);
    mc.hidden = c.hidden;
    mc.samples = c.samples;
    mc.groups = c.groups;
    const ToyModel model(mc, c.seed);
    const TrainingConfig cfg = training_config(scheme, c);

    Simulation sim(plan, model, cfg);
    LossTrace trace;
    std::vector<std::uint64_t> digests;
    for (std::size_t s = 0; s < c.steps; ++s) {
        trace.push_back(sim.run_step());
        digests.push_back(digest(sim.parameters()));
    }
    const TrafficLedger& ledger = sim.fabric().ledger();

    {
        std::ofstream f(c.trace_path);
        if (!f) throw ConfigError("trace", fmt::format("cannot write {}", c.trace_path));
        write_loss_trace(f, trace);
    }
    {
        std::ofstream f(c.ledger_path);
        if (!f) throw ConfigError("ledger", fmt::format("cannot write {}", c.ledger_path));
        f << ledger.to_tsv();
    }

    const ModelSpec padded{static_cast<double>(sim.layout().padded_total()), cfg.param_width};
    const ReconcileReport rec = reconcile(step_cost(plan, padded, cfg.quant), ledger);
    const bool exact = !cfg.quant.any() && !cfg.mixed_precision;

    const std::vector<std::pair<std::string, std::string>> summary = [&] {
        std::vector<std::pair<std::string, std::string>> s = {
            {"scheme", std::string(to_string(scheme))},
            {"devices", fmt::format("{}", t.device_count())},
            {"steps", fmt::format("{}", c.steps)},
            {"seed", fmt::format("{}", c.seed)},
            {"psi", fmt::format("{}", mc.psi)},
            {"padded_psi", fmt::format("{}", sim.layout().padded_total())},
            {"weights_int8", cfg.quant.weights_int8 ? "on" : "off"},
            {"grads_int4", cfg.quant.grads_int4 ? "on" : "off"},
            {"mixed_precision", cfg.mixed_precision ? "on" : "off"},
            {"final_loss", trace.empty() ? "-" : fmt::format("{:.17g}", trace.back())},
        };
        for (LinkClass lc : kAllLinkClasses) {
            s.push_back({fmt::format("{}_bytes", to_string(lc)), fmt::format("{}", ledger.payload(lc))});
        }
        s.push_back({"metadata_bytes", fmt::format("{}", ledger.total_metadata_received())});
        s.push_back({"reconcile", rec.ok() ? "ok" : "mismatch"});
        if (exact) {
            const TrainingResult base =
                baseline_single_worker(model, c.steps, ReductionLayout::of(t), cfg.adam);
            const bool equal = base.losses == trace && base.param_digests == digests;
            s.push_back({"oracle-equal", equal ? "true" : "false"});
        } else {
            s.push_back({"oracle-equal", "n/a"});
        }
        return s;
    }();
    if (c.format == "markdown") {
        out << "| key | value |\n|---|---|\n";
        for (const auto& [k, v] : summary) out << "| " << k << " | " << v << " |\n";
    } else {
        for (const auto& [k, v] : summary) out << k << ": " << v << "\n";
    }
    if (!rec.ok()) out << rec.describe();
    return rec.ok() ? kExitOk : kExitRuntime;
}

int cmd_compare(const RunConfig& c, std::ostream& out) {
    if (c.schemes.size() < 2) throw ConfigError("schemes", "compare needs at least two schemes");
    const std::vector<Scheme> schemes = parse_schemes(c.schemes);
    const Topology t = resolve_topology(c);
    const ModelSpec m{checked_psi(c.psi == 0.0 ? 20e9 : c.psi), c.param_width};
    const OptimizerSpec o = parse_optimizer(c.optimizer);

    std::vector<std::vector<std::string>> rows;
    for (Scheme s : schemes) {
        const ShardingPlan plan = make_plan(s, t, sec_for(s, c));
        const StepCostReport r = step_cost(plan, m, c.alpha);
        std::vector<std::string> row = {std::string(to_string(s)), bytes_str(total_model_state_mem(plan, m, o))};
        for (const auto& ph : r.phases) row.push_back(bytes_str(ph.volume_bytes));
        row.push_back(bytes_str(r.class_totals[static_cast<std::size_t>(LinkClass::InterNode)]));
        row.push_back(fmt::format("{:.3f}", r.total_time * 1e6));
        rows.push_back(std::move(row));
    }
    std::vector<std::string> header = {"scheme", "mem_bytes_per_device"};
    for (Phase ph : kAllPhases) header.push_back(fmt::format("{}_bytes", to_string(ph)));
    header.push_back("inter_node_bytes");
    header.push_back("est_time_us");
    out << render(header, rows, c.format);
    return kExitOk;
}

void add_topology_options(CLI::App* app, RunConfig& c) {
    auto* builtin = app->add_option("--builtin", c.builtin, "Built-in topology")
                        ->check(CLI::IsMember({"frontier", "dgx"}))
                        ->capture_default_str();
    app->add_option("--nodes", c.nodes, "Node count for the built-in topology")->capture_default_str();
    app->add_option("--topology", c.topology_file, "Topology config file (JSON)")->excludes(builtin);
    app->add_option("--format", c.format, "Output format")
        ->check(CLI::IsMember({"tsv", "markdown"}))
        ->capture_default_str();
}

void add_model_options(CLI::App* app, RunConfig& c) {
    app->add_option("--optimizer", c.optimizer, "adam or sgd")->capture_default_str();
    app->add_option("--param-width", c.param_width, "Bytes per working-precision parameter")
        ->check(CLI::Range(1, 8))
        ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig c;
    CLI::App app{"Hierarchical ZeRO sharding simulator and cost model", "zerotopo"};
    app.require_subcommand(1);

    auto* plan = app.add_subcommand("plan", "Per-device memory and per-phase communication for one scheme");
    add_topology_options(plan, c);
    add_model_options(plan, c);
    plan->add_option("--scheme", c.scheme, "zero1|zero2|zero3|zeropp|zerotopo")->required();
    plan->add_option("--sec", c.sec, "Secondary partition degree");
    plan->add_option("--psi", c.psi, "Parameter count (e.g. 20e9)")->required();
    plan->add_option("--alpha", c.alpha, "Per-collective latency in seconds")->capture_default_str();

    auto* maxmodel = app.add_subcommand("maxmodel", "Largest model whose states fit per device");
    add_topology_options(maxmodel, c);
    add_model_options(maxmodel, c);
    maxmodel->add_option("--capacity", c.capacity, "Device memory in bytes (e.g. 64e9)")->capture_default_str();
    maxmodel->add_option("--schemes", c.schemes, "Schemes to solve for")
        ->default_str("zero3 zeropp zerotopo");
    maxmodel->add_option("--sec", c.sec, "Secondary degree for zerotopo");

    auto* simulate = app.add_subcommand("simulate", "Train the toy model over the simulated fabric");
    add_topology_options(simulate, c);
    simulate->add_option("--param-width", c.param_width, "Wire bytes per unquantized element")
        ->check(CLI::Range(1, 8))
        ->capture_default_str();
    simulate->add_option("--scheme", c.scheme, "zero1|zero2|zero3|zeropp|zerotopo")->required();
    simulate->add_option("--sec", c.sec, "Secondary partition degree");
    simulate->add_option("--psi", c.psi, "Toy model parameter count")->default_str("1e5");
    simulate->add_option("--steps", c.steps, "Training steps")->capture_default_str();
    simulate->add_option("--seed", c.seed, "Data and initialization seed")->capture_default_str();
    simulate->add_option("--hidden", c.hidden, "Hidden width")->capture_default_str();
    simulate->add_option("--samples", c.samples, "Dataset size")->capture_default_str();
    simulate->add_option("--groups", c.groups, "Parameter groups gathered one at a time")->capture_default_str();
    simulate->add_option("--lr", c.lr, "Adam learning rate")->capture_default_str();
    auto* exact = simulate->add_flag("--exact", c.exact, "No quantization, uniform precision");
    const auto on_off_check = CLI::IsMember({"default", "on", "off"});
    simulate->add_option("--weights-int8", c.weights_int8, "on|off")->check(on_off_check)->excludes(exact);
    simulate->add_option("--grads-int4", c.grads_int4, "on|off")->check(on_off_check)->excludes(exact);
    simulate->add_option("--mixed", c.mixed, "Mixed precision on|off")->check(on_off_check)->excludes(exact);
    simulate->add_option("--trace", c.trace_path, "Loss trace output")->capture_default_str();
    simulate->add_option("--ledger", c.ledger_path, "Ledger output")->capture_default_str();

    auto* compare = app.add_subcommand("compare", "Side-by-side cost of several schemes");
    add_topology_options(compare, c);
    add_model_options(compare, c);
    compare->add_option("schemes", c.schemes, "Schemes to compare")->required();
    compare->add_option("--psi", c.psi, "Parameter count")->default_str("20e9");
    compare->add_option("--sec", c.sec, "Secondary degree for zerotopo");
    compare->add_option("--alpha", c.alpha, "Per-collective latency in seconds")->capture_default_str();

    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("zerotopo");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitConfig;
    }

    try {
        if (*plan) return cmd_plan(c, out);
        if (*maxmodel) {
            if (c.schemes.empty()) c.schemes = {"zero3", "zeropp", "zerotopo"};
            return cmd_maxmodel(c, out);
        }
        if (*simulate) return cmd_simulate(c, out);
        if (*compare) return cmd_compare(c, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.field() << ": " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}

}  // namespace zerotopo::cli
