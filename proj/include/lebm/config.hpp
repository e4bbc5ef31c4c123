#pragma once

#include <cstdint>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lebm/data.hpp"
#include "lebm/langevin.hpp"
#include "lebm/model.hpp"
#include "lebm/rng.hpp"
#include "lebm/util.hpp"

namespace lebm {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& where, int line, const std::string& what)
        : std::runtime_error(where + ":" + std::to_string(line) + ": " + what) {}
};

enum class DatasetKind { Idx, Ring, Tilted };

// Every Algorithm-1 hyperparameter plus dataset and output wiring. Plain
// `key = value` text with `#` comments; unknown keys are a hard error, keys
// are case-sensitive, and missing keys take the reference defaults (image
// mode: K0=60, s0=0.4, K1=20, s1=0.1, sigma=0.3, eta0=2e-5, eta1=1e-4,
// adam betas (0.5, 0.999), d=100).
struct TrainConfig {
    // data
    DatasetKind dataset = DatasetKind::Idx;
    std::int64_t data_n = 2000;
    std::int64_t ring_modes = 8;
    double ring_radius = 4.0;
    double ring_noise = 0.15;
    double tilted_mean = 2.0;
    std::string idx_images;
    std::string idx_labels;
    std::int64_t exclude_label = -1;

    // model
    std::int64_t d = -1;  // latent dim; resolved per dataset kind when unset
    std::int64_t nef = 200;
    std::int64_t gen_hidden = 128;
    std::int64_t gen_layers = 2;
    std::string gen_output;  // "tanh" | "identity"; resolved per dataset kind
    bool gen_identity = false;
    double sigma = 0.3;

    // optimization (Algorithm 1)
    std::int64_t iterations = 5000;
    std::int64_t batch_size = 100;
    double eta0 = 2e-5;
    double eta1 = 1e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    std::int64_t K0 = 60;
    double s0 = 0.4;
    std::int64_t K1 = 20;
    double s1 = 0.1;
    bool freeze_alpha = false;  // keep f_alpha at its zero init: fixed Gaussian prior

    // run
    std::uint64_t seed = 0;
    std::int64_t eval_every = 100;
    std::int64_t n_chains = 8;
    std::int64_t threads = 1;
    std::string out_dir = "run";

    LangevinConfig prior_cfg() const { return {K0, s0, false}; }
    LangevinConfig posterior_cfg() const { return {K1, s1, false}; }
};

namespace detail {

inline bool parse_i64(const std::string& s, std::int64_t& out) {
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (errno != 0 || end != s.c_str() + s.size() || s.empty()) return false;
    out = v;
    return true;
}

inline bool parse_f64(const std::string& s, double& out) {
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty()) return false;
    out = v;
    return true;
}

inline bool parse_bool(const std::string& s, bool& out) {
    if (s == "true") { out = true; return true; }
    if (s == "false") { out = false; return true; }
    return false;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

// Applies one `key = value` assignment; `where`/`line` feed error messages.
inline void apply_config_entry(TrainConfig& cfg, const std::string& key,
                               const std::string& value, const std::string& where,
                               int line) {
    auto bad_value = [&]() -> ConfigError {
        return ConfigError(where, line, "cannot parse value '" + value + "' for key '" + key + "'");
    };
    auto i64 = [&](std::int64_t& out) {
        if (!detail::parse_i64(value, out)) throw bad_value();
    };
    auto f64 = [&](double& out) {
        if (!detail::parse_f64(value, out)) throw bad_value();
    };
    auto boolean = [&](bool& out) {
        if (!detail::parse_bool(value, out)) throw bad_value();
    };

    if (key == "dataset") {
        if (value == "idx") cfg.dataset = DatasetKind::Idx;
        else if (value == "ring") cfg.dataset = DatasetKind::Ring;
        else if (value == "tilted") cfg.dataset = DatasetKind::Tilted;
        else throw ConfigError(where, line, "dataset must be idx, ring, or tilted");
    } else if (key == "data_n") i64(cfg.data_n);
    else if (key == "ring_modes") i64(cfg.ring_modes);
    else if (key == "ring_radius") f64(cfg.ring_radius);
    else if (key == "ring_noise") f64(cfg.ring_noise);
    else if (key == "tilted_mean") f64(cfg.tilted_mean);
    else if (key == "idx_images") cfg.idx_images = value;
    else if (key == "idx_labels") cfg.idx_labels = value;
    else if (key == "exclude_label") i64(cfg.exclude_label);
    else if (key == "d") i64(cfg.d);
    else if (key == "nef") i64(cfg.nef);
    else if (key == "gen_hidden") i64(cfg.gen_hidden);
    else if (key == "gen_layers") i64(cfg.gen_layers);
    else if (key == "gen_output") {
        if (value != "tanh" && value != "identity") {
            throw ConfigError(where, line, "gen_output must be tanh or identity");
        }
        cfg.gen_output = value;
    } else if (key == "gen_identity") boolean(cfg.gen_identity);
    else if (key == "sigma") f64(cfg.sigma);
    else if (key == "iterations") i64(cfg.iterations);
    else if (key == "batch_size") i64(cfg.batch_size);
    else if (key == "eta0") f64(cfg.eta0);
    else if (key == "eta1") f64(cfg.eta1);
    else if (key == "adam_beta1") f64(cfg.adam_beta1);
    else if (key == "adam_beta2") f64(cfg.adam_beta2);
    else if (key == "K0") i64(cfg.K0);
    else if (key == "s0") f64(cfg.s0);
    else if (key == "K1") i64(cfg.K1);
    else if (key == "s1") f64(cfg.s1);
    else if (key == "freeze_alpha") boolean(cfg.freeze_alpha);
    else if (key == "seed") {
        std::int64_t v;
        i64(v);
        cfg.seed = static_cast<std::uint64_t>(v);
    } else if (key == "eval_every") i64(cfg.eval_every);
    else if (key == "n_chains") i64(cfg.n_chains);
    else if (key == "threads") i64(cfg.threads);
    else if (key == "out_dir") cfg.out_dir = value;
    else throw ConfigError(where, line, "unknown key '" + key + "'");
}

// Fills the dataset-dependent defaults and checks every invariant; error
// messages cite the key by name.
inline void resolve_config(TrainConfig& cfg, const std::string& where = "config") {
    if (cfg.d < 0) cfg.d = (cfg.dataset == DatasetKind::Idx) ? 100 : 2;
    if (cfg.gen_output.empty()) {
        cfg.gen_output = (cfg.dataset == DatasetKind::Idx) ? "tanh" : "identity";
    }

    auto bad = [&](const std::string& what) -> ConfigError {
        return ConfigError(where, 0, what);
    };
    if (cfg.iterations < 1) throw bad("iterations must be >= 1");
    if (cfg.batch_size < 1) throw bad("batch_size must be >= 1");
    if (cfg.eta0 < 0.0) throw bad("eta0 must be >= 0");
    if (cfg.eta1 < 0.0) throw bad("eta1 must be >= 0");
    if (cfg.K0 < 0) throw bad("K0 must be >= 0");
    if (cfg.K1 < 0) throw bad("K1 must be >= 0");
    if (!(cfg.s0 > 0.0)) throw bad("s0 must be > 0");
    if (!(cfg.s1 > 0.0)) throw bad("s1 must be > 0");
    if (!(cfg.sigma > 0.0)) throw bad("sigma must be > 0");
    if (cfg.d < 1) throw bad("d must be >= 1");
    if (cfg.nef < 1) throw bad("nef must be >= 1");
    if (cfg.gen_hidden < 1) throw bad("gen_hidden must be >= 1");
    if (cfg.gen_layers < 0) throw bad("gen_layers must be >= 0");
    if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0)) throw bad("adam_beta1 must be in [0,1)");
    if (!(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0)) throw bad("adam_beta2 must be in [0,1)");
    if (cfg.data_n < 1) throw bad("data_n must be >= 1");
    if (cfg.ring_modes < 1) throw bad("ring_modes must be >= 1");
    if (cfg.eval_every < 1) throw bad("eval_every must be >= 1");
    if (cfg.n_chains < 1) throw bad("n_chains must be >= 1");
    if (cfg.threads < 1) throw bad("threads must be >= 1");
}

struct ParsedConfig {
    TrainConfig cfg;
    bool seed_given = false;
};

// Parses `key = value` lines; `#` starts a comment, blank lines are skipped,
// duplicate keys are rejected. Defaults are not resolved here so command-line
// overrides can still change the dataset mode.
inline ParsedConfig parse_config_entries(const std::string& text, const std::string& where) {
    ParsedConfig pc;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string stripped = detail::trim(raw);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where, line, "expected 'key = value', got '" + stripped + "'");
        }
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty()) throw ConfigError(where, line, "missing key before '='");
        if (auto it = seen.find(key); it != seen.end()) {
            throw ConfigError(where, line, "duplicate key '" + key + "' (first set on line " +
                                               std::to_string(it->second) + ")");
        }
        seen[key] = line;
        apply_config_entry(pc.cfg, key, value, where, line);
        if (key == "seed") pc.seed_given = true;
    }
    return pc;
}

// Applies overrides, falls back to the LEBM_SEED environment variable when no
// seed was given anywhere, and resolves mode-dependent defaults.
inline TrainConfig finalize_config(
    ParsedConfig pc, const std::vector<std::pair<std::string, std::string>>& overrides,
    const std::string& where) {
    for (const auto& [key, value] : overrides) {
        apply_config_entry(pc.cfg, key, value, "override " + key, 0);
        if (key == "seed") pc.seed_given = true;
    }
    if (!pc.seed_given) {
        if (const char* env = std::getenv("LEBM_SEED")) {
            std::int64_t v;
            if (!detail::parse_i64(env, v)) {
                throw ConfigError("LEBM_SEED", 0, "environment seed is not an integer");
            }
            pc.cfg.seed = static_cast<std::uint64_t>(v);
        }
    }
    resolve_config(pc.cfg, where);
    return pc.cfg;
}

inline TrainConfig parse_config_text(const std::string& text, const std::string& where) {
    return finalize_config(parse_config_entries(text, where), {}, where);
}

inline TrainConfig parse_config(const std::string& path) {
    return parse_config_text(read_file(path), path);
}

// Canonical echo of a resolved config: every experiment-defining key in fixed
// order. Feeds the run log, the checkpoint, and the manifest hash. out_dir
// and threads are execution details, not experiment parameters, and are
// excluded so equal experiments produce byte-equal checkpoints regardless of
// where or how parallel they ran.
inline std::string canonical_config_text(const TrainConfig& cfg) {
    std::ostringstream os;
    const char* kind = cfg.dataset == DatasetKind::Idx     ? "idx"
                       : cfg.dataset == DatasetKind::Ring  ? "ring"
                                                           : "tilted";
    os << "dataset = " << kind << "\n";
    os << "data_n = " << cfg.data_n << "\n";
    os << "ring_modes = " << cfg.ring_modes << "\n";
    os << "ring_radius = " << fmt_g17(cfg.ring_radius) << "\n";
    os << "ring_noise = " << fmt_g17(cfg.ring_noise) << "\n";
    os << "tilted_mean = " << fmt_g17(cfg.tilted_mean) << "\n";
    os << "idx_images = " << cfg.idx_images << "\n";
    os << "idx_labels = " << cfg.idx_labels << "\n";
    os << "exclude_label = " << cfg.exclude_label << "\n";
    os << "d = " << cfg.d << "\n";
    os << "nef = " << cfg.nef << "\n";
    os << "gen_hidden = " << cfg.gen_hidden << "\n";
    os << "gen_layers = " << cfg.gen_layers << "\n";
    os << "gen_output = " << cfg.gen_output << "\n";
    os << "gen_identity = " << (cfg.gen_identity ? "true" : "false") << "\n";
    os << "sigma = " << fmt_g17(cfg.sigma) << "\n";
    os << "iterations = " << cfg.iterations << "\n";
    os << "batch_size = " << cfg.batch_size << "\n";
    os << "eta0 = " << fmt_g17(cfg.eta0) << "\n";
    os << "eta1 = " << fmt_g17(cfg.eta1) << "\n";
    os << "adam_beta1 = " << fmt_g17(cfg.adam_beta1) << "\n";
    os << "adam_beta2 = " << fmt_g17(cfg.adam_beta2) << "\n";
    os << "K0 = " << cfg.K0 << "\n";
    os << "s0 = " << fmt_g17(cfg.s0) << "\n";
    os << "K1 = " << cfg.K1 << "\n";
    os << "s1 = " << fmt_g17(cfg.s1) << "\n";
    os << "freeze_alpha = " << (cfg.freeze_alpha ? "true" : "false") << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "eval_every = " << cfg.eval_every << "\n";
    os << "n_chains = " << cfg.n_chains << "\n";
    return os.str();
}

// ---- dataset / model construction -------------------------------------------

inline Dataset make_dataset(const TrainConfig& cfg) {
    switch (cfg.dataset) {
        case DatasetKind::Ring: {
            Rng rng(cfg.seed, Rng::mix64({streams::k_dataset}));
            return synth_ring(static_cast<std::size_t>(cfg.data_n),
                              static_cast<std::size_t>(cfg.ring_modes), cfg.ring_radius,
                              cfg.ring_noise, rng);
        }
        case DatasetKind::Tilted: {
            Rng rng(cfg.seed, Rng::mix64({streams::k_dataset}));
            const auto n = static_cast<std::size_t>(cfg.data_n);
            Dataset ds;
            ds.items = Tensor({n, 1});
            ds.name = "tilted";
            for (std::size_t i = 0; i < n; ++i) {
                const double z = cfg.tilted_mean + rng.next_normal();
                ds.items[i] = z + cfg.sigma * rng.next_normal();
            }
            return ds;
        }
        case DatasetKind::Idx: {
            if (cfg.idx_images.empty() || cfg.idx_labels.empty()) {
                throw std::runtime_error("config: dataset = idx requires idx_images and idx_labels");
            }
            Dataset ds = load_idx(cfg.idx_images, cfg.idx_labels);
            if (cfg.exclude_label >= 0) {
                ds = filter_by_label(ds, static_cast<int>(cfg.exclude_label));
            }
            return ds;
        }
    }
    throw std::logic_error("config: unreachable dataset kind");
}

// Model construction from config and the observed data dimension. Parameter
// init streams are fixed so a (config, seed) pair pins the model bits.
inline ModelParams make_model(const TrainConfig& cfg, std::size_t data_dim) {
    const auto d = static_cast<std::size_t>(cfg.d);
    const auto nef = static_cast<std::size_t>(cfg.nef);

    EbmPrior alpha = [&] {
        if (cfg.freeze_alpha) return make_zero_ebm_prior(d, nef);
        Rng rng(cfg.seed, Rng::mix64({streams::k_init_alpha}));
        return make_ebm_prior(d, nef, rng);
    }();

    Generator beta = [&] {
        if (cfg.gen_identity) {
            if (data_dim != d) {
                throw std::runtime_error("config: gen_identity requires d == data dim");
            }
            return make_identity_generator(d, cfg.sigma);
        }
        std::vector<std::size_t> dims;
        dims.push_back(d);
        for (std::int64_t l = 0; l < cfg.gen_layers; ++l)
            dims.push_back(static_cast<std::size_t>(cfg.gen_hidden));
        dims.push_back(data_dim);
        const Activation out_act =
            cfg.gen_output == "tanh" ? Activation::Tanh : Activation::Identity;
        Rng rng(cfg.seed, Rng::mix64({streams::k_init_beta}));
        return make_generator(dims, out_act, cfg.sigma, rng);
    }();

    ModelParams params{std::move(alpha), std::move(beta)};
    validate_model(params);
    return params;
}

}  // namespace lebm
