#pragma once

// File formats: long-format choice data, run configuration, posterior draws,
// run manifests and the truth sidecar of generated data.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "robit/datagen.hpp"
#include "robit/error.hpp"
#include "robit/gibbs.hpp"
#include "robit/model.hpp"
#include "robit/posterior.hpp"
#include "robit/predictive.hpp"

namespace robit {

inline constexpr std::string_view kVersion = "0.1.0";

/// Missing or unwritable file.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace io {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Text helpers

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view s, std::ptrdiff_t row, std::string_view what) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data() + (!s.empty() && s[0] == '+'), end, v);
    if (s.empty() || ec != std::errc() || ptr != end)
        throw DataError("cannot parse " + std::string(what) + " '" + std::string(s) + "'", row);
    return v;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

/// Comma-separated table; blank lines and lines starting with '#' are skipped.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line;  ///< 1-based source line of each row

    std::size_t column(std::string_view name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("missing column '" + std::string(name) + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
};

inline CsvTable parse_csv(std::string_view text) {
    CsvTable t;
    std::size_t pos = 0, lineno = 0;
    bool have_header = false;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto raw = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++lineno;
        const auto s = trim(raw);
        if (s.empty() || s[0] == '#') continue;
        auto fields = split_fields(s);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size())
            throw DataError("expected " + std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()),
                            static_cast<std::ptrdiff_t>(lineno));
        t.rows.push_back(std::move(fields));
        t.line.push_back(lineno);
    }
    if (!have_header) throw DataError("empty CSV input");
    return t;
}

// ---------------------------------------------------------------------------
// Choice data, long format: obs_id, alt_id, chosen, <attributes...>

struct DatasetOptions {
    /// Base alternative name; empty selects the last alternative.
    std::string base;
    /// Alternatives that receive a constant.
    std::vector<std::string> asc;
    /// Attribute columns to use; empty uses all of them.
    std::vector<std::string> attributes;
};

/// Rows of one observation must be contiguous and list the same alternatives
/// in the same order as the first observation.
inline ChoiceDataset parse_dataset_csv(std::string_view text, const DatasetOptions& options = {}) {
    const auto t = parse_csv(text);
    const std::size_t c_obs = t.column("obs_id"), c_alt = t.column("alt_id"), c_chosen = t.column("chosen");
    std::vector<std::size_t> attr_cols;
    std::vector<std::string> attr_names;
    if (options.attributes.empty()) {
        for (std::size_t c = 0; c < t.header.size(); ++c)
            if (c != c_obs && c != c_alt && c != c_chosen) {
                attr_cols.push_back(c);
                attr_names.push_back(t.header[c]);
            }
    } else {
        for (const auto& a : options.attributes) {
            attr_cols.push_back(t.column(a));
            attr_names.push_back(a);
        }
    }
    if (t.rows.empty()) throw DataError("dataset has no rows");

    std::vector<std::string> alts;
    for (std::size_t r = 0; r < t.rows.size() && t.rows[r][c_obs] == t.rows[0][c_obs]; ++r) {
        if (std::find(alts.begin(), alts.end(), t.rows[r][c_alt]) != alts.end())
            throw DataError("alternative '" + t.rows[r][c_alt] + "' repeated within observation",
                            static_cast<std::ptrdiff_t>(t.line[r]));
        alts.push_back(t.rows[r][c_alt]);
    }
    const std::size_t J = alts.size();
    if (J < 2) throw DataError("each observation needs at least two alternatives");
    if (t.rows.size() % J != 0) throw DataError("row count is not a multiple of the choice-set size " + std::to_string(J));
    const std::size_t N = t.rows.size() / J;

    ObservedAttributes obs(N, J, attr_cols.size());
    obs.attribute_names = attr_names;
    std::vector<int> choices(N, -1);
    std::set<std::string> seen_ids;
    for (std::size_t i = 0; i < N; ++i) {
        const auto& id = t.rows[i * J][c_obs];
        if (!seen_ids.insert(id).second)
            throw DataError("observation '" + id + "' is not contiguous", static_cast<std::ptrdiff_t>(t.line[i * J]));
        for (std::size_t j = 0; j < J; ++j) {
            const std::size_t r = i * J + j;
            const auto row = static_cast<std::ptrdiff_t>(t.line[r]);
            const auto& fields = t.rows[r];
            if (fields[c_obs] != id)
                throw DataError("observation '" + id + "' has " + std::to_string(j) + " rows, expected " + std::to_string(J), row);
            if (fields[c_alt] != alts[j])
                throw DataError("alternative '" + fields[c_alt] + "' where '" + alts[j] + "' was expected", row);
            const auto& ch = fields[c_chosen];
            if (ch != "0" && ch != "1") throw DataError("chosen must be 0 or 1, found '" + ch + "'", row);
            if (ch == "1") {
                if (choices[i] >= 0) throw DataError("observation '" + id + "' has more than one chosen alternative", row);
                choices[i] = static_cast<int>(j);
            }
            for (std::size_t k = 0; k < attr_cols.size(); ++k) {
                const double v = parse_number(fields[attr_cols[k]], row, attr_names[k]);
                if (!std::isfinite(v)) throw DataError("non-finite value in column '" + attr_names[k] + "'", row);
                obs(i, j, k) = v;
            }
        }
        if (choices[i] < 0)
            throw DataError("observation '" + id + "' has no chosen alternative", static_cast<std::ptrdiff_t>(t.line[i * J]));
    }

    const auto index_of = [&](const std::string& name) {
        const auto it = std::find(alts.begin(), alts.end(), name);
        if (it == alts.end()) throw InvalidArgument("unknown alternative '" + name + "'");
        return static_cast<std::size_t>(it - alts.begin());
    };
    const std::size_t base = options.base.empty() ? J - 1 : index_of(options.base);
    std::vector<std::size_t> asc;
    for (const auto& a : options.asc) asc.push_back(index_of(a));
    return build_dataset(std::move(obs), choices, base, asc, alts);
}

inline ChoiceDataset read_dataset_csv(const std::filesystem::path& path, const DatasetOptions& options = {}) {
    return parse_dataset_csv(read_file(path), options);
}

inline std::string dataset_csv(const ChoiceDataset& d) {
    std::string out = "obs_id,alt_id,chosen";
    for (const auto& a : d.observed.attribute_names) out += "," + a;
    out += "\n";
    for (std::size_t i = 0; i < d.n_obs; ++i) {
        const std::size_t y = d.chosen_alternative(i);
        for (std::size_t j = 0; j < d.n_alt; ++j) {
            out += std::to_string(i + 1) + "," + d.alternative_names[j] + "," + (j == y ? "1" : "0");
            for (std::size_t k = 0; k < d.observed.n_attr; ++k) out += "," + format_double(d.observed(i, j, k));
            out += "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Posterior draws: chain, iteration, <parameters...>

inline std::string draws_csv(const PosteriorDraws& draws) {
    std::string out = "chain,iteration";
    for (const auto& n : draws.names) out += "," + n;
    out += "\n";
    for (std::size_t c = 0; c < draws.n_chains(); ++c) {
        const auto& m = draws.chains[c];
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            const std::size_t it = c < draws.iterations.size() && static_cast<std::size_t>(r) < draws.iterations[c].size()
                                       ? draws.iterations[c][static_cast<std::size_t>(r)]
                                       : static_cast<std::size_t>(r) + 1;
            out += std::to_string(c + 1) + "," + std::to_string(it);
            for (Eigen::Index k = 0; k < m.cols(); ++k) out += "," + format_double(m(r, k));
            out += "\n";
        }
    }
    return out;
}

/// Chains in order of first appearance; chains may differ in length (partial runs).
inline PosteriorDraws parse_draws_csv(std::string_view text) {
    const auto t = parse_csv(text);
    if (t.header.size() < 3 || t.header[0] != "chain" || t.header[1] != "iteration")
        throw DataError("draws file must start with columns chain, iteration");
    PosteriorDraws d;
    d.names.assign(t.header.begin() + 2, t.header.end());
    std::vector<std::string> ids;
    std::vector<std::vector<std::vector<double>>> rows;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& f = t.rows[r];
        auto it = std::find(ids.begin(), ids.end(), f[0]);
        std::size_t c = static_cast<std::size_t>(it - ids.begin());
        if (it == ids.end()) {
            ids.push_back(f[0]);
            rows.emplace_back();
            d.iterations.emplace_back();
        }
        const auto row = static_cast<std::ptrdiff_t>(t.line[r]);
        d.iterations[c].push_back(static_cast<std::size_t>(parse_number(f[1], row, "iteration")));
        std::vector<double> v(d.names.size());
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = parse_number(f[k + 2], row, d.names[k]);
        rows[c].push_back(std::move(v));
    }
    for (const auto& chain : rows) {
        RowMatrix m(static_cast<Eigen::Index>(chain.size()), static_cast<Eigen::Index>(d.names.size()));
        for (std::size_t r = 0; r < chain.size(); ++r)
            for (std::size_t k = 0; k < d.names.size(); ++k) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = chain[r][k];
        d.chains.push_back(std::move(m));
    }
    return d;
}

// ---------------------------------------------------------------------------
// Run configuration (JSON)

struct SimulateConfig {
    int example = 1;
    std::size_t n = 40000;
    std::uint64_t seed = 1;
    std::size_t true_prob_draws = 10000;
    std::size_t elasticity_draws = 1000;
};

struct RunConfig {
    SimulateConfig simulate;
    std::string data_path;
    DatasetOptions dataset;
    Kernel kernel = Kernel::MNP;
    std::vector<int> dof_groups;
    /// Prior overrides; B0 and S accept a scalar (times identity) or a matrix.
    Json priors = Json::object();
    ChainConfig chain;
    double holdout = 0.0;
    std::uint64_t split_seed = 1;
    PredictionConfig prediction;
    std::vector<std::string> scenarios;
};

namespace detail {

inline void check_keys(const Json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw InvalidArgument("config: '" + std::string(where) + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            std::string list;
            for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
            throw InvalidArgument("config: unknown key '" + key + "' in '" + std::string(where) + "' (valid: " + list + ")");
        }
    }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InvalidArgument(std::string("config: key '") + key + "' has the wrong type");
    }
}

inline Matrix matrix_or_scalar(const Json& v, Eigen::Index n, const char* name) {
    if (v.is_number()) return v.get<double>() * Matrix::Identity(n, n);
    if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != n)
        throw InvalidArgument(std::string("config: priors.") + name + " must be a number or a " + std::to_string(n) + "x" +
                              std::to_string(n) + " array");
    Matrix m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = v[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            throw InvalidArgument(std::string("config: priors.") + name + " row " + std::to_string(r) + " has the wrong length");
        for (Eigen::Index c = 0; c < n; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

} // namespace detail

inline RunConfig config_from_json(const Json& j) {
    detail::check_keys(j, "config", {"simulate", "data", "model", "priors", "chain", "holdout", "prediction", "scenarios"});
    RunConfig c;
    if (j.contains("simulate")) {
        const auto& s = j["simulate"];
        detail::check_keys(s, "simulate", {"example", "n", "seed", "true_prob_draws", "elasticity_draws"});
        c.simulate.example = detail::get_or<int>(s, "example", c.simulate.example);
        c.simulate.n = detail::get_or<std::size_t>(s, "n", c.simulate.n);
        c.simulate.seed = detail::get_or<std::uint64_t>(s, "seed", c.simulate.seed);
        c.simulate.true_prob_draws = detail::get_or<std::size_t>(s, "true_prob_draws", c.simulate.true_prob_draws);
        c.simulate.elasticity_draws = detail::get_or<std::size_t>(s, "elasticity_draws", c.simulate.elasticity_draws);
    }
    if (j.contains("data")) {
        const auto& d = j["data"];
        detail::check_keys(d, "data", {"path", "base", "asc", "attributes"});
        c.data_path = detail::get_or<std::string>(d, "path", "");
        c.dataset.base = detail::get_or<std::string>(d, "base", "");
        c.dataset.asc = detail::get_or<std::vector<std::string>>(d, "asc", {});
        c.dataset.attributes = detail::get_or<std::vector<std::string>>(d, "attributes", {});
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        detail::check_keys(m, "model", {"kernel", "dof_groups"});
        c.kernel = parse_kernel(detail::get_or<std::string>(m, "kernel", "mnp"));
        c.dof_groups = detail::get_or<std::vector<int>>(m, "dof_groups", {});
    }
    if (j.contains("priors")) {
        detail::check_keys(j["priors"], "priors", {"B0", "rho", "S", "alpha0", "beta0"});
        c.priors = j["priors"];
    }
    if (j.contains("chain")) {
        const auto& ch = j["chain"];
        detail::check_keys(ch, "chain",
                           {"chains", "iterations", "warmup", "thin", "seed", "init_nu", "fix_nu", "sigma_update"});
        c.chain.n_chains = detail::get_or<std::size_t>(ch, "chains", c.chain.n_chains);
        c.chain.total_iterations = detail::get_or<std::size_t>(ch, "iterations", c.chain.total_iterations);
        c.chain.warmup = detail::get_or<std::size_t>(ch, "warmup", c.chain.warmup);
        c.chain.thin = detail::get_or<std::size_t>(ch, "thin", c.chain.thin);
        c.chain.seed = detail::get_or<std::uint64_t>(ch, "seed", c.chain.seed);
        c.chain.init_nu = detail::get_or<double>(ch, "init_nu", c.chain.init_nu);
        if (ch.contains("fix_nu") && !ch["fix_nu"].is_null()) c.chain.fix_nu = detail::get_or<double>(ch, "fix_nu", 0.0);
        c.chain.sigma_update = parse_sigma_update(detail::get_or<std::string>(ch, "sigma_update", "scale-augmented"));
    }
    if (j.contains("holdout")) {
        const auto& h = j["holdout"];
        detail::check_keys(h, "holdout", {"fraction", "seed"});
        c.holdout = detail::get_or<double>(h, "fraction", 0.0);
        c.split_seed = detail::get_or<std::uint64_t>(h, "seed", 1);
    }
    if (j.contains("prediction")) {
        const auto& p = j["prediction"];
        detail::check_keys(p, "prediction", {"posterior_draws", "error_draws", "seed", "threads"});
        c.prediction.n_posterior_draws = detail::get_or<std::size_t>(p, "posterior_draws", c.prediction.n_posterior_draws);
        c.prediction.n_error_draws = detail::get_or<std::size_t>(p, "error_draws", c.prediction.n_error_draws);
        c.prediction.seed = detail::get_or<std::uint64_t>(p, "seed", c.prediction.seed);
        c.prediction.threads = detail::get_or<std::size_t>(p, "threads", c.prediction.threads);
    }
    c.scenarios = detail::get_or<std::vector<std::string>>(j, "scenarios", {});
    return c;
}

inline RunConfig parse_config(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    return config_from_json(j);
}

/// Effective configuration; thread counts are left out since results do not depend on them.
inline Json config_to_json(const RunConfig& c) {
    Json j;
    j["simulate"] = {{"example", c.simulate.example},
                     {"n", c.simulate.n},
                     {"seed", c.simulate.seed},
                     {"true_prob_draws", c.simulate.true_prob_draws},
                     {"elasticity_draws", c.simulate.elasticity_draws}};
    j["data"] = {{"path", c.data_path}, {"base", c.dataset.base}, {"asc", c.dataset.asc}, {"attributes", c.dataset.attributes}};
    j["model"] = {{"kernel", std::string(to_string(c.kernel))}, {"dof_groups", c.dof_groups}};
    j["priors"] = c.priors;
    j["chain"] = {{"chains", c.chain.n_chains},
                  {"iterations", c.chain.total_iterations},
                  {"warmup", c.chain.warmup},
                  {"thin", c.chain.thin},
                  {"seed", c.chain.seed},
                  {"init_nu", c.chain.init_nu},
                  {"fix_nu", c.chain.fix_nu ? Json(*c.chain.fix_nu) : Json(nullptr)},
                  {"sigma_update", std::string(to_string(c.chain.sigma_update))}};
    j["holdout"] = {{"fraction", c.holdout}, {"seed", c.split_seed}};
    j["prediction"] = {{"posterior_draws", c.prediction.n_posterior_draws},
                       {"error_draws", c.prediction.n_error_draws},
                       {"seed", c.prediction.seed}};
    j["scenarios"] = c.scenarios;
    return j;
}

/// Model specification for a dataset: default priors with the config's overrides.
inline ModelSpec make_spec(const RunConfig& c, const ChoiceDataset& data) {
    ModelSpec s = ModelSpec::make(c.kernel, data.n_coef, data.n_alt);
    if (c.kernel == Kernel::GenMNR && !c.dof_groups.empty()) s.dof_groups = c.dof_groups;
    if (c.kernel != Kernel::GenMNR && !c.dof_groups.empty())
        throw InvalidArgument("config: model.dof_groups applies to the genmnr kernel only");
    const auto& p = c.priors;
    const auto K = static_cast<Eigen::Index>(data.n_coef), D = static_cast<Eigen::Index>(data.n_dim());
    try {
        if (p.contains("B0")) s.priors.B0 = detail::matrix_or_scalar(p["B0"], K, "B0");
        if (p.contains("S")) s.priors.S = detail::matrix_or_scalar(p["S"], D, "S");
        if (p.contains("rho")) s.priors.rho = p["rho"].get<double>();
        if (p.contains("alpha0")) s.priors.alpha0 = p["alpha0"].get<double>();
        if (p.contains("beta0")) s.priors.beta0 = p["beta0"].get<double>();
    } catch (const nlohmann::json::exception&) {
        throw InvalidArgument("config: priors have the wrong type");
    }
    s.validate(data.n_coef, data.n_alt);
    return s;
}

// ---------------------------------------------------------------------------
// Train/test split

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Random holdout of round(fraction·N) observations; both parts in ascending order.
inline Split holdout_split(std::size_t n_obs, double fraction, std::uint64_t seed) {
    robit::detail::require(fraction >= 0.0 && fraction < 1.0, "holdout fraction must lie in [0, 1)");
    std::vector<std::size_t> idx(n_obs);
    for (std::size_t i = 0; i < n_obs; ++i) idx[i] = i;
    RngStream rng(seed, 0x686f6c646f7574ULL);
    for (std::size_t i = n_obs; i > 1; --i) {
        const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(k, i - 1)]);
    }
    const auto n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n_obs)));
    Split s;
    s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    std::sort(s.test.begin(), s.test.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

// ---------------------------------------------------------------------------
// Manifests and reports

inline Json telemetry_json(const SamplerTelemetry& t, bool with_time) {
    Json j = {{"nu_accepted", t.nu_accepted},
              {"nu_attempted", t.nu_attempted},
              {"q_accepted", t.q_accepted},
              {"q_attempted", t.q_attempted},
              {"sigma_accepted", t.sigma_accepted},
              {"sigma_attempted", t.sigma_attempted},
              {"nu_mode_not_found", t.nu_mode_not_found},
              {"nu_mode_at_boundary", t.nu_mode_at_boundary},
              {"jitter_events", t.jitter_events}};
    if (with_time) j["wall_time_seconds"] = t.wall_time;
    return j;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline std::string manifest_hash(std::string_view manifest_text) { return hex64(fnv1a(manifest_text)); }

/// Writes a matrix with a header and an optional leading comment.
inline std::string table_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                             const std::string& comment = {}) {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    for (std::size_t k = 0; k < header.size(); ++k) out += (k ? "," : "") + header[k];
    out += "\n";
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < r.size(); ++k) out += (k ? "," : "") + r[k];
        out += "\n";
    }
    return out;
}

inline std::string probabilities_csv(const RowMatrix& p, const ChoiceDataset& d, std::span<const std::size_t> obs_ids,
                                     const std::string& comment = {}) {
    std::vector<std::string> header{"obs_id"};
    for (const auto& a : d.alternative_names) header.push_back(a);
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        std::vector<std::string> r{std::to_string(obs_ids[static_cast<std::size_t>(i)] + 1)};
        for (Eigen::Index j = 0; j < p.cols(); ++j) r.push_back(format_double(p(i, j)));
        rows.push_back(std::move(r));
    }
    return table_csv(header, rows, comment);
}

inline RowMatrix parse_probabilities_csv(std::string_view text, std::size_t n_alt) {
    const auto t = parse_csv(text);
    if (t.header.size() != n_alt + 1) throw DataError("probability file has the wrong number of alternatives");
    RowMatrix p(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(n_alt));
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t j = 0; j < n_alt; ++j)
            p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                parse_number(t.rows[r][j + 1], static_cast<std::ptrdiff_t>(t.line[r]), "probability");
    return p;
}

inline Json parameters_json(const ModelParameters& p) {
    Json sigma = Json::array();
    for (Eigen::Index r = 0; r < p.Sigma.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < p.Sigma.cols(); ++c) row.push_back(p.Sigma(r, c));
        sigma.push_back(row);
    }
    return {{"beta", std::vector<double>(p.beta.data(), p.beta.data() + p.beta.size())},
            {"Sigma", sigma},
            {"nu", std::vector<double>(p.nu.data(), p.nu.data() + p.nu.size())}};
}

inline std::string elasticity_csv(std::span<const ElasticityResult> results, const ChoiceDataset& d,
                                  const std::string& comment = {}) {
    std::vector<std::string> header{"scenario"};
    for (const auto& a : d.alternative_names) header.push_back(a);
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : results) {
        // ';' keeps the label a single unquoted field
        auto label = r.scenario.label(d);
        std::replace(label.begin(), label.end(), ',', ';');
        std::vector<std::string> row{label};
        for (std::size_t j = 0; j < r.elasticity.size(); ++j)
            row.push_back(r.undefined[j] ? "undefined" : format_double(r.elasticity[j]));
        rows.push_back(std::move(row));
    }
    return table_csv(header, rows, comment);
}

/// Truth sidecar of generated data: supplied and identified parameters, plus
/// true elasticities when present.
inline Json truth_json(const ExampleBundle& b) {
    const auto& g = b.generated;
    Json j;
    j["kernel"] = std::string(to_string(b.spec.kernel));
    j["dof_groups"] = b.spec.dof_groups;
    j["coefficients"] = g.data.coefficient_names;
    j["alternatives"] = g.data.alternative_names;
    j["base"] = g.data.alternative_names[g.data.base];
    j["truth"] = parameters_json(g.truth);
    j["identified"] = parameters_json(g.identified);
    j["scale"] = g.scale;
    Json el = Json::array();
    for (const auto& e : b.true_elasticities) {
        Json v = Json::array();
        for (std::size_t k = 0; k < e.elasticity.size(); ++k) v.push_back(e.undefined[k] ? Json(nullptr) : Json(e.elasticity[k]));
        el.push_back({{"scenario", e.scenario.label(g.data)}, {"elasticity", v}});
    }
    j["true_elasticities"] = el;
    return j;
}

} // namespace io
} // namespace robit
