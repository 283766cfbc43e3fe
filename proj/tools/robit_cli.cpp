// Command-line driver: simulate, fit, diagnose, summarize, predict, elasticity, score.
//
// Exit codes: 0 success, 1 soft diagnostic failure, 2 usage or validation
// error, 3 numerical abort.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "robit/robit.hpp"

namespace fs = std::filesystem;
using namespace robit;
using io::Json;

namespace {

/// Soft failure: results were written but a diagnostic threshold was crossed.
struct SoftFailure {
    std::string message;
};

void require_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw InvalidArgument("output directory '" + dir + "' does not exist");
}

io::RunConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    return io::parse_config(io::read_file(path));
}

Json software() { return {{"name", "robit"}, {"version", std::string(kVersion)}}; }

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : sep) + x;
    return s;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    std::string config, out;
    std::optional<int> example;
    std::optional<std::size_t> n, true_prob_draws, elasticity_draws;
    std::optional<std::uint64_t> seed;
};

int run_simulate(const SimulateArgs& a) {
    auto cfg = load_config(a.config);
    auto& s = cfg.simulate;
    if (a.example) s.example = *a.example;
    if (a.n) s.n = *a.n;
    if (a.seed) s.seed = *a.seed;
    if (a.true_prob_draws) s.true_prob_draws = *a.true_prob_draws;
    if (a.elasticity_draws) s.elasticity_draws = *a.elasticity_draws;
    require_dir(a.out);
    if (s.example != 1 && s.example != 2) throw InvalidArgument("example must be 1 or 2");
    if (s.n < 1) throw InvalidArgument("n must be at least 1");

    const ExampleOptions opt{s.true_prob_draws, s.elasticity_draws};
    const auto bundle = s.example == 1 ? example1(s.n, s.seed, opt) : example2(s.n, s.seed, opt);
    const auto& d = bundle.generated.data;
    const fs::path out(a.out);

    const std::string data_text = io::dataset_csv(d);
    const std::string truth_text = io::dump(io::truth_json(bundle));
    io::write_file(out / "data.csv", data_text);
    io::write_file(out / "truth.json", truth_text);
    Json outputs = {{"data.csv", io::hex64(io::fnv1a(data_text))}, {"truth.json", io::hex64(io::fnv1a(truth_text))}};
    if (s.true_prob_draws > 0) {
        std::vector<std::size_t> ids(d.n_obs);
        for (std::size_t i = 0; i < d.n_obs; ++i) ids[i] = i;
        const auto text = io::probabilities_csv(bundle.generated.true_probabilities, d, ids);
        io::write_file(out / "true_probabilities.csv", text);
        outputs["true_probabilities.csv"] = io::hex64(io::fnv1a(text));
    }

    // ready-to-run fit configuration for the generated data
    io::RunConfig fit;
    fit.data_path = (out / "data.csv").string();
    fit.dataset.base = d.alternative_names[d.base];
    for (auto j : d.asc_alternatives) fit.dataset.asc.push_back(d.alternative_names[j]);
    fit.kernel = bundle.spec.kernel;
    fit.scenarios.clear();
    for (const auto& sc : bundle.scenarios) fit.scenarios.push_back(sc.label(d));
    Json fit_json = io::config_to_json(fit);
    fit_json.erase("simulate");
    io::write_file(out / "fit_config.json", io::dump(fit_json));

    Json manifest = {{"software", software()}, {"command", "simulate"}, {"config", {{"simulate", io::config_to_json(cfg)["simulate"]}}},
                     {"outputs", outputs}};
    io::write_file(out / "manifest.json", io::dump(manifest));

    const auto shares = realized_shares(d);
    std::printf("example %d: N = %zu, kernel %s, seed %llu\n", s.example, d.n_obs,
                std::string(to_string(bundle.spec.kernel)).c_str(), static_cast<unsigned long long>(s.seed));
    std::printf("realized shares:");
    for (std::size_t j = 0; j < d.n_alt; ++j) std::printf(" %s=%.1f%%", d.alternative_names[j].c_str(), 100.0 * shares[j]);
    std::printf("\nwrote %s\n", out.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
    std::string config, out, data, base, kernel, sigma_update;
    std::vector<std::string> asc;
    std::vector<int> dof_groups;
    std::optional<std::size_t> chains, iterations, warmup, thin;
    std::optional<std::uint64_t> seed, split_seed;
    std::optional<double> holdout, fix_nu;
};

struct Prepared {
    io::RunConfig cfg;
    std::string data_text;
    ChoiceDataset full;
    io::Split split;
    ChoiceDataset train;
    ModelSpec spec;
};

io::Split make_split(const io::RunConfig& cfg, std::size_t n) {
    if (cfg.holdout > 0.0) return io::holdout_split(n, cfg.holdout, cfg.split_seed);
    io::Split s;
    s.train.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.train[i] = i;
    return s;
}

Prepared prepare(io::RunConfig cfg) {
    if (cfg.data_path.empty()) throw InvalidArgument("no dataset given (set data.path in the config or pass --data)");
    Prepared p;
    p.data_text = io::read_file(cfg.data_path);
    p.full = io::parse_dataset_csv(p.data_text, cfg.dataset);
    p.split = make_split(cfg, p.full.n_obs);
    if (p.split.train.empty()) throw InvalidArgument("holdout leaves no training observations");
    p.train = cfg.holdout > 0.0 ? subset(p.full, p.split.train) : p.full;
    p.spec = io::make_spec(cfg, p.train);
    p.cfg = std::move(cfg);
    return p;
}

int run_fit(const FitArgs& a) {
    auto cfg = load_config(a.config);
    if (!a.data.empty()) cfg.data_path = a.data;
    if (!a.base.empty()) cfg.dataset.base = a.base;
    if (!a.asc.empty()) cfg.dataset.asc = a.asc;
    if (!a.kernel.empty()) cfg.kernel = parse_kernel(a.kernel);
    if (!a.dof_groups.empty()) cfg.dof_groups = a.dof_groups;
    if (!a.sigma_update.empty()) cfg.chain.sigma_update = parse_sigma_update(a.sigma_update);
    if (a.chains) cfg.chain.n_chains = *a.chains;
    if (a.iterations) cfg.chain.total_iterations = *a.iterations;
    if (a.warmup) cfg.chain.warmup = *a.warmup;
    if (a.thin) cfg.chain.thin = *a.thin;
    if (a.seed) cfg.chain.seed = *a.seed;
    if (a.fix_nu) cfg.chain.fix_nu = *a.fix_nu;
    if (a.holdout) cfg.holdout = *a.holdout;
    if (a.split_seed) cfg.split_seed = *a.split_seed;
    require_dir(a.out);
    cfg.chain.validate();

    auto p = prepare(std::move(cfg));
    const auto diag = validate(p.train, p.spec);
    for (const auto& item : diag.items)
        if (item.severity != Severity::Info)
            std::fprintf(stderr, "%s: %s\n", item.severity == Severity::Error ? "error" : "warning", item.message.c_str());
    if (!diag.ok()) throw InvalidArgument("dataset failed validation");

    const auto fit = run_chains(p.spec, p.train, p.cfg.chain);
    const fs::path out(a.out);
    const std::string draws_text = io::draws_csv(fit.draws);
    io::write_file(out / "draws.csv", draws_text);

    Json chains = Json::array(), timing = Json::array();
    for (std::size_t c = 0; c < fit.telemetry.size(); ++c) {
        Json ch = {{"chain", c + 1},
                   {"retained", fit.draws.chains[c].rows()},
                   {"aborted", fit.errors[c].has_value()},
                   {"telemetry", io::telemetry_json(fit.telemetry[c], false)}};
        if (fit.errors[c]) ch["error"] = fit.errors[c]->what();
        chains.push_back(ch);
        timing.push_back({{"chain", c + 1}, {"telemetry", io::telemetry_json(fit.telemetry[c], true)}});
    }
    Json manifest = {{"software", software()},
                     {"command", "fit"},
                     {"config", io::config_to_json(p.cfg)},
                     {"inputs", {{"data", {{"path", p.cfg.data_path}, {"fnv1a", io::hex64(io::fnv1a(p.data_text))}}}}},
                     {"data", {{"n_obs", p.full.n_obs}, {"n_train", p.split.train.size()}, {"n_test", p.split.test.size()}}},
                     {"parameters", fit.draws.names},
                     {"chains", chains},
                     {"outputs", {{"draws.csv", io::hex64(io::fnv1a(draws_text))}}}};
    io::write_file(out / "manifest.json", io::dump(manifest));
    io::write_file(out / "telemetry.json", io::dump({{"chains", timing}}));
    if (!p.split.test.empty()) {
        std::vector<std::vector<std::string>> rows;
        for (auto i : p.split.train) rows.push_back({std::to_string(i + 1), "train"});
        for (auto i : p.split.test) rows.push_back({std::to_string(i + 1), "test"});
        std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return std::stoul(x[0]) < std::stoul(y[0]); });
        io::write_file(out / "split.csv", io::table_csv({"obs_id", "part"}, rows));
    }

    const fs::path marker = out / "draws.csv.partial";
    if (fit.aborted()) {
        std::string msg;
        for (const auto& e : fit.errors)
            if (e) msg += std::string(e->what()) + "\n";
        io::write_file(marker, msg);
        std::fprintf(stderr, "%s", msg.c_str());
        std::fprintf(stderr, "partial draws kept in %s\n", (out / "draws.csv").string().c_str());
        return 3;
    }
    fs::remove(marker);
    std::printf("fit %s: %zu chains x %zu retained draws, %zu parameters\n", std::string(to_string(p.spec.kernel)).c_str(),
                fit.draws.n_chains(), fit.draws.n_retained(), fit.draws.n_params());
    for (std::size_t c = 0; c < fit.telemetry.size(); ++c) {
        const auto& t = fit.telemetry[c];
        std::printf("chain %zu: sigma acceptance %.3f", c + 1, t.accept_rate_sigma());
        const auto nu = t.mh_accept_rate_nu();
        for (std::size_t s = 0; s < nu.size(); ++s) std::printf(", nu_%zu acceptance %.3f", s + 1, nu[s]);
        std::printf(", %.1f s\n", t.wall_time);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Commands reading a fit directory

struct FitInputs {
    std::string fit_dir, data, out, split = "auto";
};

struct Loaded {
    Prepared p;
    PosteriorDraws draws;
    std::string manifest_hash;
    std::vector<std::size_t> rows;  ///< evaluation observations (0-based in the full data)
    ChoiceDataset eval;

    std::string comment() const { return "manifest=" + manifest_hash; }
};

Loaded load_fit(const FitInputs& in, bool need_data) {
    const fs::path dir(in.fit_dir);
    if (fs::exists(dir / "draws.csv.partial"))
        throw InvalidArgument("fit in '" + in.fit_dir + "' is partial (see draws.csv.partial)");
    Loaded L;
    const std::string manifest_text = io::read_file(dir / "manifest.json");
    L.manifest_hash = io::manifest_hash(manifest_text);
    Json manifest;
    try {
        manifest = Json::parse(manifest_text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("cannot parse manifest: " + std::string(e.what()));
    }
    if (!manifest.contains("config")) throw InvalidArgument("manifest has no config");
    auto cfg = io::config_from_json(manifest["config"]);
    L.draws = io::parse_draws_csv(io::read_file(dir / "draws.csv"));
    L.draws.validate();
    if (!need_data) return L;

    if (!in.data.empty()) cfg.data_path = in.data;
    L.p = prepare(std::move(cfg));
    const auto expected = parameter_names(L.p.train, L.p.spec);
    if (expected != L.draws.names) {
        std::vector<std::string> diff;
        for (std::size_t k = 0; k < std::max(expected.size(), L.draws.names.size()); ++k) {
            const std::string e = k < expected.size() ? expected[k] : "<none>";
            const std::string g = k < L.draws.names.size() ? L.draws.names[k] : "<none>";
            if (e != g) diff.push_back(g + " (expected " + e + ")");
        }
        throw InvalidArgument("draws do not match the model: " + join(diff, ", "));
    }
    std::string split = in.split;
    if (split == "auto") split = L.p.split.test.empty() ? "all" : "test";
    if (split == "test") {
        if (L.p.split.test.empty()) throw InvalidArgument("the fit has no holdout set");
        L.rows = L.p.split.test;
    } else if (split == "train") {
        L.rows = L.p.split.train;
    } else if (split == "all") {
        L.rows.resize(L.p.full.n_obs);
        for (std::size_t i = 0; i < L.rows.size(); ++i) L.rows[i] = i;
    } else {
        throw InvalidArgument("unknown split '" + split + "' (valid: auto, test, train, all)");
    }
    L.eval = split == "all" ? L.p.full : subset(L.p.full, L.rows);
    return L;
}

std::string out_dir(const FitInputs& in) {
    const std::string dir = in.out.empty() ? in.fit_dir : in.out;
    require_dir(dir);
    return dir;
}

int run_diagnose(const FitInputs& in, double threshold) {
    const auto L = load_fit(in, false);
    const fs::path out(out_dir(in));
    const auto r = psrf(L.draws);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> bad;
    for (std::size_t k = 0; k < r.size(); ++k) {
        rows.push_back({L.draws.names[k], io::format_double(r[k])});
        std::printf("%-12s %8.4f%s\n", L.draws.names[k].c_str(), r[k], r[k] > threshold ? "  *" : "");
        if (!(r[k] <= threshold)) bad.push_back(L.draws.names[k]);
    }
    io::write_file(out / "rhat.csv", io::table_csv({"parameter", "rhat"}, rows, L.comment()));
    if (!bad.empty()) throw SoftFailure{"R-hat above " + io::format_double(threshold) + " for: " + join(bad, ", ")};
    return 0;
}

int run_summarize(const FitInputs& in, const std::vector<std::string>& wtp_pairs) {
    const auto L = load_fit(in, false);
    const fs::path out(out_dir(in));
    const auto table = summarize(L.draws);
    std::vector<std::vector<std::string>> rows;
    char line[256];
    std::string text;
    std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %10s\n", "Parameter", "Mean", "Std. dev.", "[0.025", "0.975]");
    text += line;
    for (const auto& r : table.rows) {
        rows.push_back({r.name, io::format_double(r.mean), io::format_double(r.sd), io::format_double(r.q025),
                        io::format_double(r.q975)});
        std::snprintf(line, sizeof line, "%-12s %10.4f %10.4f %10.4f %10.4f\n", r.name.c_str(), r.mean, r.sd, r.q025, r.q975);
        text += line;
    }
    io::write_file(out / "summary.csv", io::table_csv({"parameter", "mean", "sd", "q2.5", "q97.5"}, rows, L.comment()));
    io::write_file(out / "summary.txt", "# " + L.comment() + "\n" + text);
    std::fputs(text.c_str(), stdout);

    if (!wtp_pairs.empty()) {
        std::vector<std::vector<std::string>> wrows;
        for (const auto& pair : wtp_pairs) {
            const auto slash = pair.find('/');
            if (slash == std::string::npos) throw InvalidArgument("--wtp expects numerator/cost, got '" + pair + "'");
            const auto num = pair.substr(0, slash), cost = pair.substr(slash + 1);
            const auto w = wtp(L.draws, num, cost);
            wrows.push_back({num, cost, io::format_double(w.ratio_of_means), io::format_double(w.per_draw.mean),
                             io::format_double(w.per_draw.sd), io::format_double(w.per_draw.q025),
                             io::format_double(w.per_draw.q975), w.warning ? "\"" + *w.warning + "\"" : ""});
            std::printf("wtp %s/%s: %.4f (per-draw mean %.4f)\n", num.c_str(), cost.c_str(), w.ratio_of_means, w.per_draw.mean);
            if (w.warning) std::fprintf(stderr, "warning: %s\n", w.warning->c_str());
        }
        io::write_file(out / "wtp.csv",
                       io::table_csv({"numerator", "cost", "ratio_of_means", "per_draw_mean", "per_draw_sd", "q2.5", "q97.5", "warning"},
                                     wrows, L.comment()));
    }
    return 0;
}

struct PredictArgs {
    std::optional<std::size_t> posterior_draws, error_draws, threads;
    std::optional<std::uint64_t> seed;
};

PredictionConfig prediction_config(const Loaded& L, const PredictArgs& a) {
    auto c = L.p.cfg.prediction;
    if (a.posterior_draws) c.n_posterior_draws = *a.posterior_draws;
    if (a.error_draws) c.n_error_draws = *a.error_draws;
    if (a.seed) c.seed = *a.seed;
    if (a.threads) c.threads = *a.threads;
    c.validate();
    return c;
}

std::string budget_comment(const Loaded& L, const PredictionConfig& c) {
    return L.comment() + " posterior_draws=" + std::to_string(std::min(c.n_posterior_draws, L.draws.n_total())) +
           " error_draws=" + std::to_string(c.n_error_draws) + " seed=" + std::to_string(c.seed);
}

int run_predict(const FitInputs& in, const PredictArgs& a) {
    const auto L = load_fit(in, true);
    const fs::path out(out_dir(in));
    const auto c = prediction_config(L, a);
    const auto p = predict_probabilities(L.draws, L.p.spec, L.eval, c);
    io::write_file(out / "probabilities.csv", io::probabilities_csv(p, L.eval, L.rows, budget_comment(L, c)));
    std::printf("wrote probabilities for %zu observations (%s)\n", L.rows.size(), budget_comment(L, c).c_str());
    return 0;
}

int run_elasticity(const FitInputs& in, const PredictArgs& a, std::vector<std::string> scenarios) {
    const auto L = load_fit(in, true);
    const fs::path out(out_dir(in));
    const auto c = prediction_config(L, a);
    if (scenarios.empty()) scenarios = L.p.cfg.scenarios;
    if (scenarios.empty()) throw InvalidArgument("no scenarios given (pass --scenario or set scenarios in the config)");
    std::vector<Scenario> parsed;
    for (const auto& s : scenarios) parsed.push_back(parse_scenario(s, L.eval));
    const auto r = arc_elasticities(L.draws, L.p.spec, L.eval, parsed, c);
    const auto text = io::elasticity_csv(r, L.eval, budget_comment(L, c));
    io::write_file(out / "elasticity.csv", text);
    for (const auto& e : r) {
        std::printf("%-32s", e.scenario.label(L.eval).c_str());
        for (std::size_t j = 0; j < e.elasticity.size(); ++j) {
            if (e.undefined[j])
                std::printf(" %9s", "undefined");
            else
                std::printf(" %9.4f", e.elasticity[j]);
        }
        std::printf("\n");
    }
    return 0;
}

int run_score(const FitInputs& in, const PredictArgs& a, const std::string& metric, const std::string& truth_path) {
    if (metric != "brier" && metric != "quadratic")
        throw InvalidArgument("unknown metric '" + metric + "' (valid: brier, quadratic)");
    if (metric == "quadratic" && truth_path.empty()) throw InvalidArgument("--metric quadratic needs --truth");
    const auto L = load_fit(in, true);
    const fs::path out(out_dir(in));
    const auto c = prediction_config(L, a);
    const auto p = predict_probabilities(L.draws, L.p.spec, L.eval, c);
    std::vector<double> terms;
    if (metric == "brier") {
        terms = brier_terms(observed_choices(L.eval), p);
    } else {
        const auto all = io::parse_probabilities_csv(io::read_file(truth_path), L.p.full.n_alt);
        if (static_cast<std::size_t>(all.rows()) != L.p.full.n_obs)
            throw InvalidArgument("truth file has " + std::to_string(all.rows()) + " rows, data has " +
                                  std::to_string(L.p.full.n_obs));
        RowMatrix t(static_cast<Eigen::Index>(L.rows.size()), all.cols());
        for (std::size_t r = 0; r < L.rows.size(); ++r) t.row(static_cast<Eigen::Index>(r)) = all.row(static_cast<Eigen::Index>(L.rows[r]));
        quadratic_loss(t, p);  // validates shapes and rows
        for (Eigen::Index r = 0; r < t.rows(); ++r) terms.push_back((t.row(r) - p.row(r)).squaredNorm());
    }
    double total = 0.0;
    for (double v : terms) total += v;
    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < terms.size(); ++r) rows.push_back({std::to_string(L.rows[r] + 1), io::format_double(terms[r])});
    io::write_file(out / "score.csv",
                   io::table_csv({"obs_id", metric}, rows, budget_comment(L, c) + " " + metric + "=" + io::format_double(total)));
    std::printf("%s %s\n", metric.c_str(), io::format_double(total).c_str());
    return 0;
}

void add_fit_inputs(CLI::App* cmd, FitInputs& in) {
    cmd->add_option("--fit", in.fit_dir, "Directory written by 'fit'")->required();
    cmd->add_option("--out", in.out, "Existing output directory (default: the fit directory)");
}

void add_data_inputs(CLI::App* cmd, FitInputs& in, PredictArgs& p) {
    cmd->add_option("--data", in.data, "Dataset CSV (default: the one recorded in the fit manifest)");
    cmd->add_option("--split", in.split, "Observations to use: auto, test, train, all");
    cmd->add_option("--posterior-draws", p.posterior_draws, "Posterior draws used");
    cmd->add_option("--error-draws", p.error_draws, "Error draws per posterior draw and observation");
    cmd->add_option("--pred-seed", p.seed, "Simulation seed");
    cmd->add_option("--threads", p.threads, "Worker threads (results do not depend on it)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian multinomial probit and robit choice models"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Generate one of the synthetic experiments");
    c_sim->add_option("--config", sim.config, "JSON configuration");
    c_sim->add_option("--example", sim.example, "Experiment 1 (robit) or 2 (generalised robit)");
    c_sim->add_option("--n", sim.n, "Number of observations");
    c_sim->add_option("--seed", sim.seed, "Random seed");
    c_sim->add_option("--true-prob-draws", sim.true_prob_draws, "Error draws per observation for the true probabilities");
    c_sim->add_option("--elasticity-draws", sim.elasticity_draws, "Error draws per observation for the true elasticities");
    c_sim->add_option("--out", sim.out, "Existing output directory")->required();

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit", "Run the Gibbs sampler");
    c_fit->add_option("--config", fit.config, "JSON configuration");
    c_fit->add_option("--data", fit.data, "Dataset CSV");
    c_fit->add_option("--base", fit.base, "Base alternative");
    c_fit->add_option("--asc", fit.asc, "Alternatives with a constant");
    c_fit->add_option("--kernel", fit.kernel, "mnp, mnr or genmnr");
    c_fit->add_option("--dof-groups", fit.dof_groups, "Block sizes of the generalised robit DOF groups");
    c_fit->add_option("--chains", fit.chains, "Number of chains");
    c_fit->add_option("--iterations", fit.iterations, "Total sweeps per chain");
    c_fit->add_option("--warmup", fit.warmup, "Discarded sweeps");
    c_fit->add_option("--thin", fit.thin, "Thinning factor");
    c_fit->add_option("--seed", fit.seed, "Random seed");
    c_fit->add_option("--fix-nu", fit.fix_nu, "Hold every nu at this value");
    c_fit->add_option("--sigma-update", fit.sigma_update, "scale-augmented (default) or printed");
    c_fit->add_option("--holdout", fit.holdout, "Fraction of observations held out");
    c_fit->add_option("--split-seed", fit.split_seed, "Seed of the holdout split");
    c_fit->add_option("--out", fit.out, "Existing output directory")->required();

    FitInputs diag_in;
    double threshold = 1.05;
    auto* c_diag = app.add_subcommand("diagnose", "Split R-hat per parameter; exit 1 if any exceeds the threshold");
    add_fit_inputs(c_diag, diag_in);
    c_diag->add_option("--threshold", threshold, "R-hat threshold");

    FitInputs sum_in;
    std::vector<std::string> wtp_pairs;
    auto* c_sum = app.add_subcommand("summarize", "Posterior summary table");
    add_fit_inputs(c_sum, sum_in);
    c_sum->add_option("--wtp", wtp_pairs, "Willingness to pay as numerator/cost");

    FitInputs pred_in;
    PredictArgs pred_args;
    auto* c_pred = app.add_subcommand("predict", "Posterior-predictive choice probabilities");
    add_fit_inputs(c_pred, pred_in);
    add_data_inputs(c_pred, pred_in, pred_args);

    FitInputs el_in;
    PredictArgs el_args;
    std::vector<std::string> scenarios;
    auto* c_el = app.add_subcommand("elasticity", "Aggregate arc elasticities");
    add_fit_inputs(c_el, el_in);
    add_data_inputs(c_el, el_in, el_args);
    c_el->add_option("--scenario", scenarios, "alt=<name or number>,attr=<attribute>,change=<+10% or factor>");

    FitInputs score_in;
    PredictArgs score_args;
    std::string metric = "brier", truth;
    auto* c_score = app.add_subcommand("score", "Brier score or quadratic loss");
    add_fit_inputs(c_score, score_in);
    add_data_inputs(c_score, score_in, score_args);
    c_score->add_option("--metric", metric, "brier or quadratic");
    c_score->add_option("--truth", truth, "True probabilities CSV (quadratic loss)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*c_sim) return run_simulate(sim);
        if (*c_fit) return run_fit(fit);
        if (*c_diag) return run_diagnose(diag_in, threshold);
        if (*c_sum) return run_summarize(sum_in, wtp_pairs);
        if (*c_pred) return run_predict(pred_in, pred_args);
        if (*c_el) return run_elasticity(el_in, el_args, scenarios);
        if (*c_score) return run_score(score_in, score_args, metric, truth);
    } catch (const SoftFailure& e) {
        std::fprintf(stderr, "warning: %s\n", e.message.c_str());
        return 1;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
