#include "gwinfer/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "gwinfer/io.hpp"
#include "gwinfer/kde.hpp"
#include "json.hpp"

namespace gwinfer::cli {

using nlohmann::json;

namespace {

const std::set<std::string> kScenarios = {"example1-kl-truth", "example1-sgs-truth",
                                          "example2-multimodal", "synthetic-smoke", "custom"};
const std::set<std::string> kMethods = {"high-fidelity", "none-pce", "none-gp", "a-pce",
                                        "a-gp",          "b-pce-gp", "b-pce-pce",
                                        "b-gp-pce",      "b-gp-gp"};

struct Validator {
    std::vector<std::string> errors;

    void check(bool ok, const std::string& message) {
        if (!ok) errors.push_back(message);
    }
    void unknown_keys(const json& obj, const std::string& where,
                      const std::set<std::string>& allowed) {
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (!allowed.count(it.key()))
                errors.push_back("unknown key '" + it.key() + "' in " + where);
    }
    void finish() const {
        if (errors.empty()) return;
        std::string joined = "config invalid:";
        for (const std::string& e : errors) joined += "\n  - " + e;
        fail("invalid-config", joined);
    }
};

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_mcmc_section(const json& obj, const std::string& where, mcmc::McmcConfig& cfg,
                        Validator& v) {
    v.unknown_keys(obj, where,
                   {"n_chains", "n_generations", "p_snooker", "archive_thin",
                    "gamma_unit_period", "jitter_width", "eps_jump_std", "snooker_gamma_lo",
                    "snooker_gamma_hi", "initial_archive", "discard_frac"});
    read_field(obj, "n_chains", cfg.n_chains);
    read_field(obj, "n_generations", cfg.n_generations);
    read_field(obj, "p_snooker", cfg.p_snooker);
    read_field(obj, "archive_thin", cfg.archive_thin);
    read_field(obj, "gamma_unit_period", cfg.gamma_unit_period);
    read_field(obj, "jitter_width", cfg.jitter_width);
    read_field(obj, "eps_jump_std", cfg.eps_jump_std);
    read_field(obj, "snooker_gamma_lo", cfg.snooker_gamma_lo);
    read_field(obj, "snooker_gamma_hi", cfg.snooker_gamma_hi);
    read_field(obj, "initial_archive", cfg.initial_archive);
    read_field(obj, "discard_frac", cfg.discard_frac);
    v.check(cfg.n_chains >= 3, where + ".n_chains must be >= 3");
    v.check(cfg.n_generations >= 1, where + ".n_generations must be >= 1");
    v.check(cfg.p_snooker >= 0.0 && cfg.p_snooker < 1.0, where + ".p_snooker must be in [0,1)");
    v.check(cfg.archive_thin >= 1, where + ".archive_thin must be >= 1");
    v.check(cfg.discard_frac >= 0.0 && cfg.discard_frac < 1.0,
            where + ".discard_frac must be in [0,1)");
}

json mcmc_to_json(const mcmc::McmcConfig& cfg) {
    return {{"n_chains", cfg.n_chains},
            {"n_generations", cfg.n_generations},
            {"p_snooker", cfg.p_snooker},
            {"archive_thin", cfg.archive_thin},
            {"gamma_unit_period", cfg.gamma_unit_period},
            {"jitter_width", cfg.jitter_width},
            {"eps_jump_std", cfg.eps_jump_std},
            {"snooker_gamma_lo", cfg.snooker_gamma_lo},
            {"snooker_gamma_hi", cfg.snooker_gamma_hi},
            {"initial_archive", cfg.initial_archive},
            {"discard_frac", cfg.discard_frac}};
}

// Scenario-dependent defaults applied before reading user values.
void apply_scenario_defaults(const std::string& scenario, RunConfig& cfg) {
    if (scenario == "example2-multimodal") {
        cfg.mcmc.n_chains = 10;
        cfg.mcmc.n_generations = 4000;
        cfg.adaptive.n_initial = 40;
        cfg.adaptive.n_add = 10;
        cfg.adaptive.n_iterations = 10;
        cfg.adaptive.mcmc.n_chains = 10;
        cfg.adaptive.mcmc.n_generations = 2000;
    } else if (scenario == "synthetic-smoke" || scenario == "custom") {
        cfg.grid = {21, 11, 20.0, 10.0};
        cfg.mcmc.n_chains = 8;
        cfg.mcmc.n_generations = 2000;
        cfg.adaptive.n_initial = 30;
        cfg.adaptive.n_add = 5;
        cfg.adaptive.n_iterations = 8;
        cfg.adaptive.mcmc.n_chains = 6;
        cfg.adaptive.mcmc.n_generations = 1200;
    } else if (scenario.rfind("example1", 0) == 0) {
        // desk-scale chain settings; the paper-scale 15 x 60000 run sits
        // behind the CLI --long flag
        cfg.mcmc.n_chains = 8;
        cfg.mcmc.n_generations = 3000;
        cfg.adaptive.n_initial = 200;
        cfg.adaptive.n_add = 20;
        cfg.adaptive.n_iterations = 25;
        cfg.adaptive.mcmc.n_chains = 8;
        cfg.adaptive.mcmc.n_generations = 1500;
        cfg.adaptive.subset_max = 0;
    }
}

} // namespace

RunConfig RunConfig::parse(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        fail("invalid-config", std::string("malformed JSON: ") + e.what());
    }
    require(doc.is_object(), "invalid-config", "config root must be a JSON object");

    Validator v;
    v.unknown_keys(doc, "config",
                   {"scenario", "method", "seed", "likelihood", "noise_std", "grid", "flow",
                    "transport", "field", "mcmc", "adaptive", "pce", "gp", "strategy_a",
                    "custom"});

    RunConfig cfg;
    read_field(doc, "scenario", cfg.scenario);
    v.check(kScenarios.count(cfg.scenario) > 0, "unknown scenario '" + cfg.scenario + "'");
    if (kScenarios.count(cfg.scenario)) apply_scenario_defaults(cfg.scenario, cfg);

    read_field(doc, "method", cfg.method);
    v.check(kMethods.count(cfg.method) > 0, "unknown method '" + cfg.method + "'");
    read_field(doc, "seed", cfg.seed);
    read_field(doc, "likelihood", cfg.likelihood);
    v.check(cfg.likelihood == "gaussian" || cfg.likelihood == "informal",
            "likelihood must be 'gaussian' or 'informal'");
    read_field(doc, "noise_std", cfg.noise_std);
    v.check(cfg.noise_std > 0.0, "noise_std must be > 0");

    if (doc.contains("grid")) {
        const json& g = doc.at("grid");
        v.unknown_keys(g, "grid", {"nx", "ny", "length_x", "length_y"});
        read_field(g, "nx", cfg.grid.nx);
        read_field(g, "ny", cfg.grid.ny);
        read_field(g, "length_x", cfg.grid.length_x);
        read_field(g, "length_y", cfg.grid.length_y);
        v.check(cfg.grid.nx >= 2 && cfg.grid.ny >= 2, "grid.nx and grid.ny must be >= 2");
        v.check(cfg.grid.length_x > 0.0 && cfg.grid.length_y > 0.0,
                "grid extents must be > 0");
    }
    if (doc.contains("flow")) {
        const json& f = doc.at("flow");
        v.unknown_keys(f, "flow", {"left_head", "right_head", "porosity"});
        read_field(f, "left_head", cfg.flow.left_head);
        read_field(f, "right_head", cfg.flow.right_head);
        read_field(f, "porosity", cfg.flow.porosity);
        v.check(cfg.flow.porosity > 0.0 && cfg.flow.porosity < 1.0,
                "flow.porosity must be in (0,1)");
    }
    if (doc.contains("transport")) {
        const json& t = doc.at("transport");
        v.unknown_keys(t, "transport",
                       {"alpha_l", "alpha_t", "end_time", "cfl_safety", "max_dt", "max_steps"});
        read_field(t, "alpha_l", cfg.transport.alpha_l);
        read_field(t, "alpha_t", cfg.transport.alpha_t);
        read_field(t, "end_time", cfg.transport.end_time);
        read_field(t, "cfl_safety", cfg.transport.cfl_safety);
        read_field(t, "max_dt", cfg.transport.max_dt);
        read_field(t, "max_steps", cfg.transport.max_steps);
        v.check(cfg.transport.alpha_l >= cfg.transport.alpha_t && cfg.transport.alpha_t > 0.0,
                "transport needs alpha_l >= alpha_t > 0");
        v.check(cfg.transport.end_time > 0.0, "transport.end_time must be > 0");
    }
    if (doc.contains("field")) {
        const json& f = doc.at("field");
        v.unknown_keys(f, "field",
                       {"variance", "corr_len_x", "corr_len_y", "kernel", "mean", "kl_terms"});
        read_field(f, "variance", cfg.field.variance);
        read_field(f, "corr_len_x", cfg.field.corr_len_x);
        read_field(f, "corr_len_y", cfg.field.corr_len_y);
        read_field(f, "kernel", cfg.field.kernel);
        read_field(f, "mean", cfg.field.mean);
        read_field(f, "kl_terms", cfg.field.kl_terms);
        v.check(cfg.field.variance > 0.0, "field.variance must be > 0");
        v.check(cfg.field.corr_len_x > 0.0 && cfg.field.corr_len_y > 0.0,
                "field correlation lengths must be > 0");
        v.check(cfg.field.kernel == "separable-exponential" ||
                    cfg.field.kernel == "isotropic-exponential",
                "field.kernel must be separable-exponential or isotropic-exponential");
        v.check(cfg.field.kl_terms >= 1, "field.kl_terms must be >= 1");
    }
    if (doc.contains("mcmc")) parse_mcmc_section(doc.at("mcmc"), "mcmc", cfg.mcmc, v);
    if (doc.contains("adaptive")) {
        const json& a = doc.at("adaptive");
        v.unknown_keys(a, "adaptive",
                       {"n_initial", "n_add", "n_iterations", "design_rule", "stretch_factor",
                        "subset_max", "mcmc"});
        read_field(a, "n_initial", cfg.adaptive.n_initial);
        read_field(a, "n_add", cfg.adaptive.n_add);
        read_field(a, "n_iterations", cfg.adaptive.n_iterations);
        read_field(a, "design_rule", cfg.adaptive.design_rule);
        read_field(a, "stretch_factor", cfg.adaptive.stretch_factor);
        read_field(a, "subset_max", cfg.adaptive.subset_max);
        if (a.contains("mcmc"))
            parse_mcmc_section(a.at("mcmc"), "adaptive.mcmc", cfg.adaptive.mcmc, v);
        v.check(cfg.adaptive.n_initial >= 3, "adaptive.n_initial must be >= 3");
        v.check(cfg.adaptive.n_add >= 1, "adaptive.n_add must be >= 1");
        v.check(cfg.adaptive.n_iterations >= 0, "adaptive.n_iterations must be >= 0");
        v.check(cfg.adaptive.design_rule == "random" || cfg.adaptive.design_rule == "stretch" ||
                    cfg.adaptive.design_rule == "quintile",
                "adaptive.design_rule must be random, stretch or quintile");
        v.check(cfg.adaptive.stretch_factor >= 1.0, "adaptive.stretch_factor must be >= 1");
        v.check(cfg.adaptive.subset_max >= 0, "adaptive.subset_max must be >= 0");
    }
    if (doc.contains("pce")) {
        const json& p = doc.at("pce");
        v.unknown_keys(p, "pce", {"orders", "q_norm", "patience"});
        read_field(p, "orders", cfg.pce.candidate_orders);
        read_field(p, "q_norm", cfg.pce.q_norm);
        read_field(p, "patience", cfg.pce.patience);
        v.check(!cfg.pce.candidate_orders.empty(), "pce.orders must not be empty");
        v.check(cfg.pce.q_norm > 0.0 && cfg.pce.q_norm <= 1.0, "pce.q_norm must be in (0,1]");
    }
    if (doc.contains("gp")) {
        const json& g = doc.at("gp");
        v.unknown_keys(g, "gp", {"restarts", "noise_floor", "max_iterations"});
        read_field(g, "restarts", cfg.gp.restarts);
        read_field(g, "noise_floor", cfg.gp.noise_floor);
        read_field(g, "max_iterations", cfg.gp.max_iterations);
        v.check(cfg.gp.restarts >= 1, "gp.restarts must be >= 1");
        v.check(cfg.gp.noise_floor > 0.0, "gp.noise_floor must be > 0");
    }
    if (doc.contains("strategy_a")) {
        const json& s = doc.at("strategy_a");
        v.unknown_keys(s, "strategy_a", {"ensemble_size", "mode"});
        read_field(s, "ensemble_size", cfg.strategy_a.ensemble_size);
        read_field(s, "mode", cfg.strategy_a.mode);
        v.check(cfg.strategy_a.ensemble_size >= 2, "strategy_a.ensemble_size must be >= 2");
        v.check(cfg.strategy_a.mode == "variance-inflation" ||
                    cfg.strategy_a.mode == "realization-injection",
                "strategy_a.mode must be variance-inflation or realization-injection");
    }
    if (doc.contains("custom")) {
        const json& c = doc.at("custom");
        v.unknown_keys(c, "custom",
                       {"k_known", "source_x_range", "source_y_range", "rate_range", "t_on",
                        "t_off", "well_x", "well_y", "conc_times", "truth"});
        read_field(c, "k_known", cfg.custom.k_known);
        read_field(c, "source_x_range", cfg.custom.source_x_range);
        read_field(c, "source_y_range", cfg.custom.source_y_range);
        read_field(c, "rate_range", cfg.custom.rate_range);
        read_field(c, "t_on", cfg.custom.t_on);
        read_field(c, "t_off", cfg.custom.t_off);
        read_field(c, "well_x", cfg.custom.well_x);
        read_field(c, "well_y", cfg.custom.well_y);
        read_field(c, "conc_times", cfg.custom.conc_times);
        read_field(c, "truth", cfg.custom.truth);
        v.check(cfg.custom.source_x_range.size() == 2 && cfg.custom.source_y_range.size() == 2 &&
                    cfg.custom.rate_range.size() == 2,
                "custom ranges must be [low, high] pairs");
        v.check(cfg.custom.t_on < cfg.custom.t_off, "custom.t_on must be < custom.t_off");
        v.check(cfg.custom.well_x.size() == cfg.custom.well_y.size(),
                "custom.well_x and custom.well_y must have equal length");
        v.check(cfg.custom.truth.size() == 3, "custom.truth must be [x_s, y_s, rate]");
    }
    v.finish();
    return cfg;
}

RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
    return parse(io::read_file(path));
}

std::string RunConfig::serialize() const {
    json doc;
    doc["scenario"] = scenario;
    doc["method"] = method;
    doc["seed"] = seed;
    doc["likelihood"] = likelihood;
    doc["noise_std"] = noise_std;
    doc["grid"] = {{"nx", grid.nx},
                   {"ny", grid.ny},
                   {"length_x", grid.length_x},
                   {"length_y", grid.length_y}};
    doc["flow"] = {{"left_head", flow.left_head},
                   {"right_head", flow.right_head},
                   {"porosity", flow.porosity}};
    doc["transport"] = {{"alpha_l", transport.alpha_l},   {"alpha_t", transport.alpha_t},
                        {"end_time", transport.end_time}, {"cfl_safety", transport.cfl_safety},
                        {"max_dt", transport.max_dt},     {"max_steps", transport.max_steps}};
    doc["field"] = {{"variance", field.variance},
                    {"corr_len_x", field.corr_len_x},
                    {"corr_len_y", field.corr_len_y},
                    {"kernel", field.kernel},
                    {"mean", field.mean},
                    {"kl_terms", field.kl_terms}};
    doc["mcmc"] = mcmc_to_json(mcmc);
    doc["adaptive"] = {{"n_initial", adaptive.n_initial},
                       {"n_add", adaptive.n_add},
                       {"n_iterations", adaptive.n_iterations},
                       {"design_rule", adaptive.design_rule},
                       {"stretch_factor", adaptive.stretch_factor},
                       {"subset_max", adaptive.subset_max},
                       {"mcmc", mcmc_to_json(adaptive.mcmc)}};
    doc["pce"] = {{"orders", pce.candidate_orders},
                  {"q_norm", pce.q_norm},
                  {"patience", pce.patience}};
    doc["gp"] = {{"restarts", gp.restarts},
                 {"noise_floor", gp.noise_floor},
                 {"max_iterations", gp.max_iterations}};
    doc["strategy_a"] = {{"ensemble_size", strategy_a.ensemble_size}, {"mode", strategy_a.mode}};
    if (scenario == "custom")
        doc["custom"] = {{"k_known", custom.k_known},
                         {"source_x_range", custom.source_x_range},
                         {"source_y_range", custom.source_y_range},
                         {"rate_range", custom.rate_range},
                         {"t_on", custom.t_on},
                         {"t_off", custom.t_off},
                         {"well_x", custom.well_x},
                         {"well_y", custom.well_y},
                         {"conc_times", custom.conc_times},
                         {"truth", custom.truth}};
    return doc.dump(2);
}

adaptive::AdaptiveConfig RunConfig::adaptive_config() const {
    adaptive::AdaptiveConfig a;
    a.n_initial = adaptive.n_initial;
    a.n_add = adaptive.n_add;
    a.n_iterations = adaptive.n_iterations;
    a.strategy = errors::ErrorStrategy::parse(method);
    a.strategy.ensemble_size = strategy_a.ensemble_size;
    a.strategy.mode = strategy_a.mode == "variance-inflation"
                          ? errors::Mode::VarianceInflation
                          : errors::Mode::RealizationInjection;
    if (adaptive.design_rule == "random") {
        a.design_rule = adaptive::DesignRule::random();
    } else if (adaptive.design_rule == "stretch") {
        a.design_rule = adaptive::DesignRule::stretch(adaptive.stretch_factor);
    } else {
        a.design_rule = adaptive::DesignRule::quintile();
    }
    if (adaptive.subset_max > 0) a.subset_max = adaptive.subset_max;
    a.mcmc = adaptive.mcmc;
    a.pce = pce;
    a.gp = gp;
    a.likelihood = likelihood == "gaussian" ? adaptive::Likelihood::Gaussian
                                            : adaptive::Likelihood::Informal;
    return a;
}

namespace {

forward::ObservationPlan example1_plan() {
    forward::ObservationPlan plan;
    for (double x : {6.0, 9.0, 12.0, 15.0, 18.0})
        for (double y : {2.5, 5.0, 7.5}) {
            plan.head_wells.push_back({x, y});
            plan.conc_wells.push_back({x, y});
        }
    plan.conc_times = {6.0, 8.0, 10.0, 12.0, 14.0};
    return plan;
}

Eigen::VectorXd table1_source_truth() {
    Eigen::VectorXd t(8);
    t << 4.033, 5.405, 1.229, 7.628, 4.327, 5.438, 0.293, 6.474;
    return t;
}

// Shared assembly for the homogeneous-conductivity pulse-source problems
// (example 2, the smoke problem and custom scenarios): flow is solved once.
Scenario homogeneous_pulse_scenario(const RunConfig& cfg, const Prior& prior,
                                    const forward::ObservationPlan& plan, double k_known,
                                    const Eigen::VectorXd& truth,
                                    const std::function<forward::SourceSpec(const Eigen::VectorXd&)>&
                                        source_of,
                                    std::vector<std::string> names) {
    Scenario sc;
    sc.prior = prior;
    sc.param_names = std::move(names);

    fields::FieldRealization field;
    field.grid = cfg.grid;
    field.values = Eigen::VectorXd::Constant(cfg.grid.n_nodes(), std::log(k_known));
    const Eigen::VectorXd heads = forward::solve_steady_flow(field, cfg.flow);
    const forward::VelocityField velocity = forward::darcy_velocity(heads, field, cfg.flow);

    const forward::FlowConfig flow = cfg.flow;
    const forward::TransportConfig transport = cfg.transport;
    const fields::GridSpec grid = cfg.grid;
    plan.validate(grid, transport.end_time);

    sc.forward = [velocity, heads, plan, flow, transport, grid,
                  source_of](const Eigen::VectorXd& m) {
        const forward::SourceSpec source = source_of(m);
        const auto snaps =
            forward::solve_transport(velocity, source, transport, flow, plan.conc_times);
        return forward::observe(heads, snaps, plan, grid);
    };

    sc.m_true = truth;
    sc.f_true = sc.forward(truth);
    sc.noise_std = Eigen::VectorXd::Constant(plan.size(), cfg.noise_std);
    RngStream noise_rng = RngStream::substream(cfg.seed, 0xDA7A);
    sc.data = *sc.f_true;
    for (Eigen::Index i = 0; i < sc.data.size(); ++i)
        sc.data[i] += cfg.noise_std * noise_rng.normal();
    return sc;
}

} // namespace

Scenario build_scenario(const RunConfig& cfg) {
    if (cfg.scenario == "example2-multimodal") {
        std::vector<Marginal> marg = {Marginal::uniform(3.0, 5.0), Marginal::uniform(3.0, 7.0),
                                      Marginal::uniform(10.0, 13.0), Marginal::uniform(3.0, 5.0),
                                      Marginal::uniform(9.0, 11.0)};
        forward::ObservationPlan plan;
        plan.conc_wells.push_back({14.0, 5.0});
        plan.conc_times = {6.0, 8.0, 10.0, 12.0, 14.0};
        Eigen::VectorXd truth(5);
        truth << 3.854, 5.999, 11.044, 4.897, 9.075;
        auto source_of = [](const Eigen::VectorXd& m) {
            return forward::SourceSpec::pulse(m[0], m[1], m[2], m[3], m[4]);
        };
        return homogeneous_pulse_scenario(cfg, Prior(marg), plan, 8.0, truth, source_of,
                                          {"x_s", "y_s", "S_s", "t_on", "t_off"});
    }

    if (cfg.scenario == "synthetic-smoke") {
        std::vector<Marginal> marg = {Marginal::uniform(3.0, 5.0), Marginal::uniform(4.0, 6.0),
                                      Marginal::uniform(10.0, 13.0)};
        forward::ObservationPlan plan;
        plan.conc_wells = {{8.0, 5.0}, {12.0, 3.5}, {12.0, 6.5}};
        plan.conc_times = {6.0, 9.0, 12.0};
        Eigen::VectorXd truth(3);
        truth << 4.1, 5.3, 11.5;
        auto source_of = [](const Eigen::VectorXd& m) {
            return forward::SourceSpec::pulse(m[0], m[1], m[2], 2.0, 6.0);
        };
        return homogeneous_pulse_scenario(cfg, Prior(marg), plan, 8.0, truth, source_of,
                                          {"x_s", "y_s", "S_s"});
    }

    if (cfg.scenario == "custom") {
        const auto& cu = cfg.custom;
        std::vector<Marginal> marg = {
            Marginal::uniform(cu.source_x_range[0], cu.source_x_range[1]),
            Marginal::uniform(cu.source_y_range[0], cu.source_y_range[1]),
            Marginal::uniform(cu.rate_range[0], cu.rate_range[1])};
        forward::ObservationPlan plan;
        for (std::size_t w = 0; w < cu.well_x.size(); ++w)
            plan.conc_wells.push_back({cu.well_x[w], cu.well_y[w]});
        plan.conc_times = cu.conc_times;
        Eigen::VectorXd truth(3);
        truth << cu.truth[0], cu.truth[1], cu.truth[2];
        const double t_on = cu.t_on, t_off = cu.t_off;
        auto source_of = [t_on, t_off](const Eigen::VectorXd& m) {
            return forward::SourceSpec::pulse(m[0], m[1], m[2], t_on, t_off);
        };
        return homogeneous_pulse_scenario(cfg, Prior(marg), plan, cu.k_known, truth, source_of,
                                          {"x_s", "y_s", "S_s"});
    }

    // example1-kl-truth / example1-sgs-truth
    require(cfg.scenario.rfind("example1", 0) == 0, "invalid-config",
            "unknown scenario " + cfg.scenario);

    fields::CovarianceSpec cov_spec;
    cov_spec.variance = cfg.field.variance;
    cov_spec.corr_len_x = cfg.field.corr_len_x;
    cov_spec.corr_len_y = cfg.field.corr_len_y;
    cov_spec.kernel_kind = fields::KernelKind::SeparableExponential;
    cov_spec.mean = cfg.field.mean;
    const fields::KLBasis basis = fields::kl_decompose(cfg.grid, cov_spec, cfg.field.kl_terms);

    const int n_kl = cfg.field.kl_terms;
    std::vector<Marginal> marg;
    std::vector<std::string> names;
    for (int i = 0; i < n_kl; ++i) {
        marg.push_back(Marginal::gaussian(0.0, 1.0));
        names.push_back("xi_" + std::to_string(i + 1));
    }
    marg.push_back(Marginal::uniform(3.0, 5.0));
    marg.push_back(Marginal::uniform(4.0, 6.0));
    for (int i = 0; i < 6; ++i) marg.push_back(Marginal::uniform(0.0, 8.0));
    for (const char* n : {"x_s", "y_s", "s_1", "s_2", "s_3", "s_4", "s_5", "s_6"})
        names.emplace_back(n);

    Scenario sc;
    sc.prior = Prior(marg);
    sc.param_names = std::move(names);

    const forward::ObservationPlan plan = example1_plan();
    plan.validate(cfg.grid, cfg.transport.end_time);
    const forward::FlowConfig flow = cfg.flow;
    const forward::TransportConfig transport = cfg.transport;
    const fields::GridSpec grid = cfg.grid;

    sc.forward = [basis, plan, flow, transport, grid, n_kl](const Eigen::VectorXd& m) {
        const fields::FieldRealization field = fields::kl_realize(basis, m.head(n_kl));
        const Eigen::VectorXd heads = forward::solve_steady_flow(field, flow);
        const forward::VelocityField velocity = forward::darcy_velocity(heads, field, flow);
        const forward::SourceSpec source = forward::SourceSpec::stages(
            m[n_kl], m[n_kl + 1],
            {m[n_kl + 2], m[n_kl + 3], m[n_kl + 4], m[n_kl + 5], m[n_kl + 6], m[n_kl + 7]});
        const auto snaps =
            forward::solve_transport(velocity, source, transport, flow, plan.conc_times);
        return forward::observe(heads, snaps, plan, grid);
    };

    sc.noise_std = Eigen::VectorXd::Constant(plan.size(), cfg.noise_std);
    RngStream noise_rng = RngStream::substream(cfg.seed, 0xDA7A);

    if (cfg.scenario == "example1-kl-truth") {
        RngStream truth_rng = RngStream::substream(cfg.seed, 0x7247);
        Eigen::VectorXd m_true(n_kl + 8);
        for (int i = 0; i < n_kl; ++i) m_true[i] = truth_rng.normal();
        m_true.tail(8) = table1_source_truth();
        sc.m_true = m_true;
        sc.f_true = sc.forward(m_true);
        sc.data = *sc.f_true;
    } else {
        // truth field drawn directly from the isotropic-exponential covariance
        // at full grid rank; the inference parameterization stays KL-truncated,
        // so no true parameter vector exists in the search space
        fields::CovarianceSpec sgs_spec = cov_spec;
        sgs_spec.kernel_kind = fields::KernelKind::IsotropicExponential;
        const Eigen::MatrixXd cov = fields::build_covariance(grid, sgs_spec);
        RngStream truth_rng = RngStream::substream(cfg.seed, 0x7248);
        const fields::FieldRealization true_field = fields::sample_field(
            cov, grid, cfg.field.mean, truth_rng.engine()());

        const Eigen::VectorXd heads = forward::solve_steady_flow(true_field, flow);
        const forward::VelocityField velocity = forward::darcy_velocity(heads, true_field, flow);
        const Eigen::VectorXd st = table1_source_truth();
        const forward::SourceSpec source = forward::SourceSpec::stages(
            st[0], st[1], {st[2], st[3], st[4], st[5], st[6], st[7]});
        const auto snaps =
            forward::solve_transport(velocity, source, transport, flow, plan.conc_times);
        sc.data = forward::observe(heads, snaps, plan, grid);
    }
    for (Eigen::Index i = 0; i < sc.data.size(); ++i)
        sc.data[i] += cfg.noise_std * noise_rng.normal();
    return sc;
}

namespace {

json summary_json(const Eigen::MatrixXd& samples, const std::vector<std::string>& names,
                  const Prior& prior) {
    Eigen::VectorXd levels(5);
    levels << 0.05, 0.25, 0.5, 0.75, 0.95;
    json doc;
    auto& params = doc["parameters"] = json::array();
    for (Eigen::Index d = 0; d < samples.cols(); ++d) {
        const auto st = kde::summarize_samples(samples.col(d), levels);
        json p;
        p["name"] = d < static_cast<Eigen::Index>(names.size())
                        ? names[static_cast<std::size_t>(d)]
                        : "m" + std::to_string(d);
        p["mean"] = st.mean;
        p["std"] = st.std;
        p["quantiles"] = {{"q05", st.quantiles[0]},
                          {"q25", st.quantiles[1]},
                          {"q50", st.quantiles[2]},
                          {"q75", st.quantiles[3]},
                          {"q95", st.quantiles[4]}};
        params.push_back(std::move(p));
    }
    doc["n_samples"] = samples.rows();
    (void)prior;
    return doc;
}

std::string densities_csv(const Eigen::MatrixXd& samples, const Prior& prior) {
    std::ostringstream out;
    out.precision(17);
    out << "param,x,pdf\n";
    for (Eigen::Index d = 0; d < samples.cols(); ++d) {
        const auto [lo, hi] = prior.range(static_cast<int>(d));
        const auto curve = kde::gaussian_kde(samples.col(d), lo, hi, 256);
        for (Eigen::Index i = 0; i < curve.x.size(); ++i)
            out << d << "," << curve.x[i] << "," << curve.pdf[i] << "\n";
    }
    return out.str();
}

json prior_to_json(const Prior& prior) {
    json arr = json::array();
    for (const Marginal& mg : prior.marginals())
        arr.push_back({{"kind", mg.kind == Marginal::Kind::Gaussian ? "gaussian" : "uniform"},
                       {"a", mg.a},
                       {"b", mg.b}});
    return arr;
}

Prior prior_from_json(const json& arr) {
    std::vector<Marginal> marg;
    for (const auto& mg : arr)
        marg.push_back(mg.at("kind").get<std::string>() == "gaussian"
                           ? Marginal::gaussian(mg.at("a").get<double>(), mg.at("b").get<double>())
                           : Marginal::uniform(mg.at("a").get<double>(),
                                               mg.at("b").get<double>()));
    return Prior(std::move(marg));
}

} // namespace

RunArtifacts run_scenario(const RunConfig& cfg, const std::filesystem::path& out_dir,
                          bool resume) {
    const Scenario sc = build_scenario(cfg);
    std::filesystem::create_directories(out_dir);

    RunArtifacts art;
    art.dir = out_dir;

    mcmc::Chains chains;
    TrainingSet training;
    std::vector<adaptive::IterationRecord> records;
    std::string strategy_mode;

    if (cfg.method == "high-fidelity") {
        adaptive::CountingForward counted(sc.forward);
        const bool informal = cfg.likelihood == "informal";
        const Eigen::VectorXd data = sc.data;
        const Eigen::VectorXd noise = sc.noise_std;
        mcmc::LogDensity target = [&counted, &sc, data, noise, informal](
                                      const Eigen::VectorXd& m, RngStream&) {
            const double lp = sc.prior.log_density(m);
            if (!std::isfinite(lp)) return lp;
            const Eigen::VectorXd out = counted(m);
            return lp + (informal ? mcmc::informal_log_likelihood(out, data)
                                  : mcmc::gaussian_log_likelihood(out, data, noise));
        };
        chains = mcmc::run_mcmc(target, sc.prior, cfg.mcmc, cfg.seed);
        art.hf_evaluations = counted.count();
    } else {
        adaptive::AdaptiveConfig acfg = cfg.adaptive_config();
        std::optional<adaptive::ResumeState> resume_state;
        if (resume && std::filesystem::exists(out_dir / "iteration_records.jsonl")) {
            adaptive::ResumeState rs;
            std::istringstream lines(io::read_file(out_dir / "iteration_records.jsonl"));
            std::string line;
            while (std::getline(lines, line))
                if (!line.empty())
                    rs.records.push_back(adaptive::IterationRecord::from_json(line));
            if (!rs.records.empty() &&
                static_cast<int>(rs.records.size()) <= acfg.n_iterations) {
                const auto design = io::read_csv(out_dir / "design_points.csv");
                const auto outputs = io::read_csv(out_dir / "training_outputs.csv");
                rs.training.inputs = design.rows;
                rs.training.outputs = outputs.rows;
                const auto chain_table = io::read_csv(out_dir / "chains.csv");
                const int dim = static_cast<int>(chain_table.header.size()) - 3;
                std::set<double> chain_ids;
                for (Eigen::Index r = 0; r < chain_table.rows.rows(); ++r)
                    chain_ids.insert(chain_table.rows(r, 0));
                rs.chains.n_chains = static_cast<int>(chain_ids.size());
                rs.chains.dim = dim;
                const int gens =
                    static_cast<int>(chain_table.rows.rows()) / rs.chains.n_chains;
                for (int c = 0; c < rs.chains.n_chains; ++c) {
                    rs.chains.states.emplace_back(gens, dim);
                    rs.chains.log_posts.emplace_back(gens);
                }
                for (Eigen::Index r = 0; r < chain_table.rows.rows(); ++r) {
                    const int c = static_cast<int>(chain_table.rows(r, 0));
                    const int t = static_cast<int>(chain_table.rows(r, 1));
                    for (int d = 0; d < dim; ++d)
                        rs.chains.states[static_cast<std::size_t>(c)](t, d) =
                            chain_table.rows(r, 2 + d);
                    rs.chains.log_posts[static_cast<std::size_t>(c)][t] =
                        chain_table.rows(r, 2 + dim);
                }
                rs.chains.acceptance_rate = Eigen::VectorXd::Zero(rs.chains.n_chains);
                resume_state = std::move(rs);
            }
        }
        const auto result =
            adaptive::run_adaptive(sc.forward, sc.prior, sc.data, sc.noise_std, acfg, cfg.seed,
                                   sc.m_true, sc.f_true, resume_state);
        require(result.abort_error.empty(), "run-failed", result.abort_error);
        chains = result.chains;
        training = result.training;
        records = result.records;
        art.hf_evaluations = result.hf_evaluations;
        strategy_mode = acfg.strategy.variant == errors::Variant::A
                            ? (acfg.strategy.mode == errors::Mode::VarianceInflation
                                   ? "variance-inflation"
                                   : "realization-injection")
                            : "";
    }

    art.acceptance_rate = chains.acceptance_rate.mean();
    const auto gr = mcmc::gelman_rubin(chains, cfg.mcmc.discard_frac);
    art.max_r_hat = gr.r_hat.maxCoeff();
    art.records = records;

    // artifacts
    io::atomic_write(out_dir / "chains.csv", chains.to_csv());
    {
        std::vector<std::string> header;
        for (int d = 0; d < chains.dim; ++d)
            header.push_back(d < static_cast<int>(sc.param_names.size())
                                 ? sc.param_names[static_cast<std::size_t>(d)]
                                 : "m" + std::to_string(d));
        io::atomic_write(out_dir / "design_points.csv", io::to_csv(header, training.inputs));
        std::vector<std::string> out_header;
        for (int k = 0; k < static_cast<int>(sc.data.size()); ++k)
            out_header.push_back("y" + std::to_string(k));
        io::atomic_write(out_dir / "training_outputs.csv",
                         io::to_csv(out_header, training.outputs));
    }
    {
        std::ostringstream lines;
        for (const auto& rec : records) lines << rec.to_json() << "\n";
        io::atomic_write(out_dir / "iteration_records.jsonl", lines.str());
    }

    auto [samples, logp] = chains.retained(cfg.mcmc.discard_frac);
    io::atomic_write(out_dir / "posterior_summary.json",
                     summary_json(samples, sc.param_names, sc.prior).dump(2));
    io::atomic_write(out_dir / "densities.csv", densities_csv(samples, sc.prior));

    json meta;
    meta["config"] = json::parse(cfg.serialize());
    meta["config_hash"] = io::fnv1a(cfg.serialize());
    meta["seed"] = cfg.seed;
    meta["scenario"] = cfg.scenario;
    meta["method"] = cfg.method;
    meta["hf_evaluations"] = art.hf_evaluations;
    meta["acceptance_rate"] = art.acceptance_rate;
    meta["max_r_hat"] = art.max_r_hat;
    meta["prior"] = prior_to_json(sc.prior);
    meta["param_names"] = sc.param_names;
    if (!strategy_mode.empty()) meta["strategy_a_mode"] = strategy_mode;
    if (sc.m_true)
        meta["m_true"] = std::vector<double>(sc.m_true->data(),
                                             sc.m_true->data() + sc.m_true->size());
    meta["timestamp"] = static_cast<long>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
    io::atomic_write(out_dir / "metadata.json", meta.dump(2));
    return art;
}

void summarize_dir(const std::filesystem::path& dir) {
    const auto table = io::read_csv(dir / "chains.csv");
    require(table.rows.rows() > 0, "invalid-config", "chains.csv is empty");
    const int dim = static_cast<int>(table.header.size()) - 3;

    const json meta = json::parse(io::read_file(dir / "metadata.json"));
    const Prior prior = prior_from_json(meta.at("prior"));
    std::vector<std::string> names = meta.at("param_names").get<std::vector<std::string>>();
    const double discard = meta.at("config").at("mcmc").at("discard_frac").get<double>();

    // rebuild retained samples, discarding burn-in per chain
    const int n_chains =
        static_cast<int>(table.rows.col(0).maxCoeff()) + 1;
    const int gens = static_cast<int>(table.rows.rows()) / n_chains;
    const int keep_from = static_cast<int>(std::floor(discard * gens));
    std::vector<Eigen::Index> keep_rows;
    for (Eigen::Index r = 0; r < table.rows.rows(); ++r)
        if (static_cast<int>(table.rows(r, 1)) >= keep_from) keep_rows.push_back(r);
    Eigen::MatrixXd samples(static_cast<Eigen::Index>(keep_rows.size()), dim);
    for (std::size_t i = 0; i < keep_rows.size(); ++i)
        samples.row(static_cast<Eigen::Index>(i)) =
            table.rows.row(keep_rows[i]).segment(2, dim);

    io::atomic_write(dir / "posterior_summary.json",
                     summary_json(samples, names, prior).dump(2));
    io::atomic_write(dir / "densities.csv", densities_csv(samples, prior));
}

std::string compare_dirs(const std::filesystem::path& dir_a,
                         const std::filesystem::path& dir_b) {
    const json sum_a = json::parse(io::read_file(dir_a / "posterior_summary.json"));
    const json sum_b = json::parse(io::read_file(dir_b / "posterior_summary.json"));
    const auto dens_a = io::read_csv(dir_a / "densities.csv");
    const auto dens_b = io::read_csv(dir_b / "densities.csv");

    const auto& pa = sum_a.at("parameters");
    const auto& pb = sum_b.at("parameters");
    require(pa.size() == pb.size(), "dimension-mismatch",
            "runs have different parameter counts");

    json cmp;
    std::ostringstream text;
    text << "param            mean_delta    std_delta    overlap\n";
    auto& params = cmp["parameters"] = json::array();
    for (std::size_t d = 0; d < pa.size(); ++d) {
        const double mean_delta =
            pa[d].at("mean").get<double>() - pb[d].at("mean").get<double>();
        const double std_delta = pa[d].at("std").get<double>() - pb[d].at("std").get<double>();

        kde::DensityCurve ca, cb;
        std::vector<double> xs, fa, fb;
        for (Eigen::Index r = 0; r < dens_a.rows.rows(); ++r)
            if (static_cast<std::size_t>(dens_a.rows(r, 0)) == d) {
                xs.push_back(dens_a.rows(r, 1));
                fa.push_back(dens_a.rows(r, 2));
            }
        for (Eigen::Index r = 0; r < dens_b.rows.rows(); ++r)
            if (static_cast<std::size_t>(dens_b.rows(r, 0)) == d) fb.push_back(dens_b.rows(r, 2));
        require(fa.size() == fb.size() && !fa.empty(), "dimension-mismatch",
                "density grids differ between runs");
        ca.x = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
        cb.x = ca.x;
        ca.pdf = Eigen::Map<const Eigen::VectorXd>(fa.data(), static_cast<Eigen::Index>(fa.size()));
        cb.pdf = Eigen::Map<const Eigen::VectorXd>(fb.data(), static_cast<Eigen::Index>(fb.size()));
        const double overlap = kde::density_overlap(ca, cb);

        const std::string name = pa[d].at("name").get<std::string>();
        params.push_back({{"name", name},
                          {"mean_delta", mean_delta},
                          {"std_delta", std_delta},
                          {"density_overlap", overlap}});
        text << name;
        for (std::size_t pad = name.size(); pad < 16; ++pad) text << ' ';
        text << "  " << mean_delta << "  " << std_delta << "  " << overlap << "\n";
    }
    io::atomic_write(dir_a / "compare.json", cmp.dump(2));
    return text.str();
}

} // namespace gwinfer::cli
