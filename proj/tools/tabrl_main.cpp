// Command-line front end: config-driven sweeps, named presets, dataset
// diagnostics, bound-formula evaluation, and the pessimism audit.
//
// Exit codes: 0 success, 1 invalid config or usage, 2 cell failures or a
// failed audit.

#include <tabrl/harness.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f.good()) throw std::invalid_argument("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Runs a validated config and persists the three artifacts.
int execute_sweep(const tabrl::ExperimentConfig& cfg, const std::string& out_dir) {
    const tabrl::SweepOutput out = tabrl::run_sweep(cfg);
    tabrl::write_sweep_output(out, out_dir);
    const std::size_t failed = out.summary["errors"].size();
    std::printf("config   %s\n", out.config_hash.c_str());
    std::printf("rows     %zu\n", out.rows.size());
    std::printf("errors   %zu\n", failed);
    std::printf("written  %s\n", out_dir.c_str());
    if (out.any_errors) {
        std::fprintf(stderr, "tabrl: %zu cell(s) failed; see summary.json\n", failed);
        return 2;
    }
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
    const auto cfg = tabrl::config_from_json(nlohmann::json::parse(read_file(config_path)));
    return execute_sweep(cfg, out_dir);
}

int cmd_preset(const std::string& name, int seeds, std::uint64_t base_seed, bool base_seed_set,
               std::string out_dir) {
    tabrl::ExperimentConfig cfg = tabrl::make_preset(name);
    if (seeds > 0) cfg.seeds = seeds;
    if (base_seed_set) cfg.base_seed = base_seed;
    if (out_dir.empty()) out_dir = "results/" + name;
    return execute_sweep(cfg, out_dir);
}

int cmd_diagnose(const std::string& env_arg, const std::string& data_path, double gamma,
                 double slip, double epsilon, double b_threshold) {
    tabrl::EnvSpec spec;
    if (std::filesystem::exists(env_arg)) {
        spec.name = std::filesystem::path(env_arg).stem().string();
        spec.layout = read_file(env_arg);
        spec.inline_text = true;
    } else {
        spec.name = env_arg;
        spec.layout = env_arg;  // named layout
    }
    spec.gamma = gamma;
    spec.slip = slip;
    spec.epsilon = epsilon;
    const tabrl::EnvBundle env = tabrl::build_env(spec);
    const tabrl::TabularMdp& mdp = env.gw.mdp;
    const double h = tabrl::horizon(mdp);

    tabrl::OfflineDataset data = tabrl::dataset_from_csv(read_file(data_path));
    tabrl::validate_dataset(data, mdp.num_states, mdp.num_actions);
    const tabrl::EmpiricalModel model =
        tabrl::build_empirical_model(data, mdp.num_states, mdp.num_actions);

    const double c_star = tabrl::concentrability(env.d_star, model.mu_hat);
    const double b = tabrl::coverage_constant(env.d_star, model.mu_hat, h);
    const tabrl::CriticalReport crit =
        tabrl::classify_critical_states(mdp, env.star, env.epsilon);

    // Support indicator at the chosen threshold; default is the measured b.
    // At threshold 0 the indicator falls back to strict positivity, so a
    // dataset with zero coverage still reports its deficit.
    const double thr = b_threshold >= 0.0 ? b_threshold : b;
    std::vector<std::vector<int>> zeta(mdp.num_states, std::vector<int>(mdp.num_actions, 0));
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a)
            zeta[s][a] = (thr > 0.0 ? model.mu_hat[s][a] >= thr : model.mu_hat[s][a] > 0.0) ? 1 : 0;
    const double u_b = tabrl::zeta_cover_deficit(mdp, env.pi_star, zeta);

    const auto put = [](const char* key, const std::string& value) {
        std::printf("%-14s %s\n", key, value.c_str());
    };
    put("env", spec.name);
    put("states", std::to_string(mdp.num_states));
    put("actions", std::to_string(mdp.num_actions));
    put("gamma", tabrl::format_double(mdp.gamma));
    put("horizon", tabrl::format_double(h));
    put("j_star", tabrl::format_double(env.j_star));
    put("transitions", std::to_string(data.transitions.size()));
    put("c_star", tabrl::format_double(c_star));
    put("coverage_b", tabrl::format_double(b));
    put("epsilon", tabrl::format_double(crit.epsilon));
    put("critical", std::to_string(crit.critical_set.size()));
    put("p_c", tabrl::format_double(crit.p_c));
    put("b_threshold", tabrl::format_double(thr));
    put("u_b", tabrl::format_double(u_b));
    return 0;
}

int cmd_bounds(const std::string& inputs_path) {
    const nlohmann::json j = nlohmann::json::parse(read_file(inputs_path));
    tabrl::BoundInputs in;
    in.c_star = j.value("c_star", in.c_star);
    if (!j.contains("h")) throw std::invalid_argument("bounds: field 'h' required");
    in.h = j["h"].get<double>();
    in.s_size = j.value("s_size", in.s_size);
    in.n = j.value("n", in.n);
    in.iota = j.contains("iota") ? j["iota"].get<double>()
                                 : tabrl::default_bound_iota(in.s_size, in.h, in.n);
    if (j.contains("b")) in.b = j["b"].get<double>();
    if (j.contains("k")) in.k = j["k"].get<long long>();
    if (j.contains("eta")) in.eta = j["eta"].get<double>();
    if (j.contains("log_z_mean")) in.log_z_mean = j["log_z_mean"].get<double>();

    // Bound values ride in the subopt column so result tooling can ingest them
    // next to measured rows.
    char hash[17];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(tabrl::fnv1a64(j.dump())));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::printf("%s\n", tabrl::kResultsHeader);
    for (const auto& [id, value] : tabrl::evaluate_bounds(in)) {
        std::printf("bounds,%s,formula,%lld,%s,%s,0,%s,%s,%s,%s,%s,%s\n", id.c_str(), in.n,
                    tabrl::format_double(0.0).c_str(),
                    tabrl::format_double(1.0 - 1.0 / in.h).c_str(),
                    tabrl::format_double(value).c_str(), tabrl::format_double(nan).c_str(),
                    tabrl::format_double(in.c_star).c_str(),
                    tabrl::format_double(in.b.value_or(nan)).c_str(),
                    tabrl::format_double(0.0).c_str(), hash);
    }
    return 0;
}

int cmd_audit(const std::string& config_path) {
    const auto cfg =
        tabrl::pessimism_audit_config_from_json(nlohmann::json::parse(read_file(config_path)));
    const tabrl::PessimismAuditResult res = tabrl::run_pessimism_audit(cfg);
    for (std::size_t i = 0; i < res.rates.size(); ++i)
        std::printf("mdp %02zu  violation_rate %s\n", i,
                    tabrl::format_double(res.rates[i]).c_str());
    std::printf("worst %s budget %s -> %s\n", tabrl::format_double(res.worst).c_str(),
                tabrl::format_double(cfg.max_rate).c_str(), res.pass ? "PASS" : "FAIL");
    return res.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular offline-RL experiment laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, preset_name, env_arg, data_path, inputs_path;
    int seeds = 0;
    std::uint64_t base_seed = 0;
    double gamma = -1.0, slip = -1.0, epsilon = -1.0, b_threshold = -1.0;

    auto* run = app.add_subcommand("run", "Execute a sweep described by a JSON config");
    run->add_option("--config", config_path, "config JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory")->default_val("results");

    auto* preset = app.add_subcommand("preset", "Execute a named built-in experiment");
    std::string preset_help = "one of:";
    for (const auto& n : tabrl::preset_names()) preset_help += " " + n;
    preset->add_option("name", preset_name, preset_help)->required();
    preset->add_option("--seeds", seeds, "override the seed count");
    auto* base_opt = preset->add_option("--base-seed", base_seed, "override the base seed");
    preset->add_option("--out", out_dir, "output directory (default results/<name>)");

    auto* diagnose =
        app.add_subcommand("diagnose", "Print dataset-vs-environment coverage diagnostics");
    diagnose->add_option("--env", env_arg, "grid text file or named layout")->required();
    diagnose->add_option("--data", data_path, "dataset CSV file")
        ->required()
        ->check(CLI::ExistingFile);
    diagnose->add_option("--gamma", gamma, "discount override");
    diagnose->add_option("--slip", slip, "slip probability override");
    diagnose->add_option("--epsilon", epsilon, "critical-state window override");
    diagnose->add_option("--b-threshold", b_threshold,
                         "support threshold for the cover deficit (default: measured b)");

    auto* bounds = app.add_subcommand("bounds", "Evaluate the suboptimality bound formulas");
    bounds->add_option("--inputs", inputs_path, "bound inputs JSON file")
        ->required()
        ->check(CLI::ExistingFile);

    auto* audit = app.add_subcommand("audit-pessimism",
                                     "Check certified values against true values on random MDPs");
    audit->add_option("--config", config_path, "audit config JSON file")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // help/version exit clean, usage errors do not
    }

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir);
        if (preset->parsed())
            return cmd_preset(preset_name, seeds, base_seed, base_opt->count() > 0, out_dir);
        if (diagnose->parsed())
            return cmd_diagnose(env_arg, data_path, gamma, slip, epsilon, b_threshold);
        if (bounds->parsed()) return cmd_bounds(inputs_path);
        if (audit->parsed()) return cmd_audit(config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "tabrl: %s\n", e.what());
        return 1;
    }
    return 0;
}
