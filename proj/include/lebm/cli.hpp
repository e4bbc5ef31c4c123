#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lebm/checkpoint.hpp"
#include "lebm/checks.hpp"
#include "lebm/config.hpp"
#include "lebm/eval.hpp"
#include "lebm/trainer.hpp"
#include "lebm/version.hpp"

namespace lebm::cli {

// Exit codes: 0 success, 1 usage/config error, 2 runtime error, 3 self-check
// failure.
inline constexpr int k_exit_ok = 0;
inline constexpr int k_exit_usage = 1;
inline constexpr int k_exit_runtime = 2;
inline constexpr int k_exit_check_failed = 3;

namespace detail {

inline std::vector<std::pair<std::string, std::string>> split_overrides(
    const std::vector<std::string>& raw) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const std::string& kv : raw) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--override", 0, "expected key=value, got '" + kv + "'");
        }
        out.emplace_back(lebm::detail::trim(kv.substr(0, eq)),
                         lebm::detail::trim(kv.substr(eq + 1)));
    }
    return out;
}

// Run manifest: config hash, seed, code version, digest of every output file.
inline void write_manifest(const std::string& out_dir, const std::string& command,
                           const std::string& config_text, std::uint64_t seed,
                           const std::vector<std::string>& files) {
    std::ostringstream os;
    os << "code_version = " << k_version << "\n";
    os << "command = " << command << "\n";
    os << "config_hash = " << hex64(fnv1a64(config_text)) << "\n";
    os << "seed = " << seed << "\n";
    for (const std::string& f : files) {
        os << "file " << std::filesystem::path(f).filename().string() << " = "
           << hex64(file_digest(f)) << "\n";
    }
    write_file(out_dir + "/manifest.txt", os.str());
}

inline bool is_square(std::size_t n, std::size_t& side) {
    side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
    return side * side == n;
}

}  // namespace detail

inline int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::string& out_dir, std::int64_t threads_flag) {
    ParsedConfig pc = parse_config_entries(read_file(config_path), config_path);
    auto ov = detail::split_overrides(overrides);
    if (threads_flag > 0) ov.emplace_back("threads", std::to_string(threads_flag));
    if (!out_dir.empty()) ov.emplace_back("out_dir", out_dir);
    TrainConfig cfg = finalize_config(std::move(pc), ov, config_path);

    const std::string dir = cfg.out_dir;
    std::cout << "resolved config:\n" << canonical_config_text(cfg);
    Dataset dataset = make_dataset(cfg);
    std::cout << "dataset " << dataset.name << ": " << dataset.size() << " items, dim "
              << dataset.dim() << "\n";

    TrainResult result = train_loop(cfg, dataset, dir, &std::cout);
    detail::write_manifest(dir, "train", canonical_config_text(cfg), cfg.seed,
                           {result.checkpoint_path, result.metrics_path});
    std::cout << "checkpoint: " << result.checkpoint_path << "\n";
    return k_exit_ok;
}

inline int cmd_sample(const std::string& ck_path, std::int64_t n, const std::string& out_dir,
                      std::int64_t k_override, double s_override) {
    Checkpoint ck = load_checkpoint(ck_path);
    LangevinConfig lcfg = ck.cfg.prior_cfg();
    if (k_override >= 0) lcfg.steps = k_override;
    if (s_override > 0.0) lcfg.step_size = s_override;

    Rng rng(ck.seed, Rng::mix64({streams::k_eval, 0xA5}));
    Tensor z = sample_prior_shortrun(ck.params.alpha, static_cast<std::size_t>(n), lcfg, rng,
                                     static_cast<int>(ck.cfg.threads))
                   .z;
    Tensor x = gen_mean(ck.params.beta, z);

    std::filesystem::create_directories(out_dir);
    std::vector<std::string> outputs;
    std::size_t side = 0;
    if (ck.cfg.dataset == DatasetKind::Idx && detail::is_square(x.cols(), side)) {
        std::filesystem::create_directories(out_dir + "/samples");
        std::ostringstream manifest;
        manifest << "file,index\n";
        for (std::size_t i = 0; i < x.rows(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "samples/sample_%04zu.pgm", i);
            std::ofstream img(out_dir + "/" + name, std::ios::binary);
            write_pgm(img, x, i, side, side);
            manifest << name << "," << i << "\n";
            outputs.push_back(out_dir + "/" + name);
        }
        write_file(out_dir + "/samples.csv", manifest.str());
        outputs.push_back(out_dir + "/samples.csv");
        std::cout << "wrote " << x.rows() << " PGM samples to " << out_dir << "/samples\n";
    } else {
        std::ostringstream csv;
        for (std::size_t j = 0; j < x.cols(); ++j) csv << (j ? "," : "") << "x" << j;
        csv << "\n";
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < x.cols(); ++j) {
                csv << (j ? "," : "") << fmt_g17(x.at(i, j));
            }
            csv << "\n";
        }
        write_file(out_dir + "/samples.csv", csv.str());
        outputs.push_back(out_dir + "/samples.csv");
        std::cout << "wrote " << x.rows() << " samples to " << out_dir << "/samples.csv\n";
    }
    detail::write_manifest(out_dir, "sample", ck.config_text, ck.seed, outputs);
    return k_exit_ok;
}

inline int cmd_reconstruct(const std::string& ck_path, std::int64_t n,
                           const std::string& out_dir) {
    Checkpoint ck = load_checkpoint(ck_path);
    Dataset dataset = make_dataset(ck.cfg);
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(n), dataset.size());
    Tensor x({take, dataset.dim()});
    for (std::size_t i = 0; i < take; ++i)
        for (std::size_t j = 0; j < dataset.dim(); ++j) x.at(i, j) = dataset.items.at(i, j);

    Rng rng(ck.seed, Rng::mix64({streams::k_eval, 0xA6}));
    Reconstruction rec = reconstruct(ck.params, x, ck.cfg.posterior_cfg(), rng,
                                     static_cast<int>(ck.cfg.threads));

    std::filesystem::create_directories(out_dir);
    std::ostringstream csv;
    csv << "item,mse\n";
    for (std::size_t i = 0; i < take; ++i) {
        double se = 0.0;
        for (std::size_t j = 0; j < dataset.dim(); ++j) {
            const double r = x.at(i, j) - rec.xhat.at(i, j);
            se += r * r;
        }
        csv << i << "," << fmt_g17(se / static_cast<double>(dataset.dim())) << "\n";
    }
    write_file(out_dir + "/recon.csv", csv.str());
    detail::write_manifest(out_dir, "reconstruct", ck.config_text, ck.seed,
                           {out_dir + "/recon.csv"});
    std::cout << "reconstruction mse over " << take << " items: " << rec.mse << "\n";
    return k_exit_ok;
}

inline int cmd_score_anomaly(const std::string& ck_path, const std::string& test_images,
                             const std::string& test_labels, std::int64_t anomaly_label,
                             std::int64_t n_chains_flag, const std::string& out_dir) {
    Checkpoint ck = load_checkpoint(ck_path);
    Dataset test = load_idx(test_images, test_labels);
    std::vector<int> binary(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        binary[i] = test.labels[i] == static_cast<int>(anomaly_label) ? 1 : 0;
    }
    const std::int64_t n_chains = n_chains_flag > 0 ? n_chains_flag : ck.cfg.n_chains;

    Rng rng(ck.seed, Rng::mix64({streams::k_eval, 0xA7}));
    std::vector<PrPoint> curve;
    AnomalyResult res = score_anomalies(ck.params, test.items, binary, ck.cfg.posterior_cfg(),
                                        n_chains, rng, static_cast<int>(ck.cfg.threads),
                                        &curve);

    std::filesystem::create_directories(out_dir);
    std::ostringstream csv;
    csv << "item,score,label\n";
    for (std::size_t i = 0; i < test.size(); ++i) {
        csv << i << "," << fmt_g17(res.scores[i]) << "," << binary[i] << "\n";
    }
    write_file(out_dir + "/scores.csv", csv.str());
    std::ostringstream pr;
    write_pr_csv(pr, curve);
    write_file(out_dir + "/pr_curve.csv", pr.str());
    detail::write_manifest(out_dir, "score-anomaly", ck.config_text, ck.seed,
                           {out_dir + "/scores.csv", out_dir + "/pr_curve.csv"});
    std::cout << "AUPRC (anomaly = label " << anomaly_label << "): " << res.auprc << "\n";
    return k_exit_ok;
}

inline int cmd_diagnose_chain(const std::string& ck_path, std::int64_t n,
                              std::int64_t k_override, double s_override,
                              const std::string& out_dir) {
    Checkpoint ck = load_checkpoint(ck_path);
    LangevinConfig lcfg = ck.cfg.prior_cfg();
    if (k_override >= 0) lcfg.steps = k_override;
    if (s_override > 0.0) lcfg.step_size = s_override;
    lcfg.record_trace = true;

    Rng rng(ck.seed, Rng::mix64({streams::k_eval, 0xD1}));
    LangevinResult res =
        sample_prior_shortrun(ck.params.alpha, static_cast<std::size_t>(n), lcfg, rng);

    std::filesystem::create_directories(out_dir + "/traces");
    std::ostringstream csv;
    write_trace_csv(csv, *res.trace);
    write_file(out_dir + "/traces/trace.csv", csv.str());
    detail::write_manifest(out_dir, "diagnose-chain", ck.config_text, ck.seed,
                           {out_dir + "/traces/trace.csv"});
    std::cout << "wrote " << res.trace->states.size() << "-step trace for " << n
              << " chains to " << out_dir << "/traces/trace.csv\n";
    return k_exit_ok;
}

inline int cmd_check(bool quick) {
    std::vector<CheckResult> results = run_self_checks(quick);
    bool all = true;
    for (const CheckResult& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
        all = all && r.pass;
    }
    return all ? k_exit_ok : k_exit_check_failed;
}

// argv-style entry point (program name excluded).
inline int run(std::vector<std::string> args) {
    CLI::App app{"latent-space EBM prior: training, sampling, and diagnostics"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run the Algorithm-1 training loop");
    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    std::int64_t threads_flag = 0;
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--override", overrides, "key=value config override (repeatable)");
    train->add_option("--out", out_dir, "output directory (default: config out_dir)");
    train->add_option("--threads", threads_flag, "sampler chain fan-out (1 = bit-exact serial)");

    // sample
    auto* sample = app.add_subcommand("sample", "prior short-run samples through the generator");
    std::string s_ck, s_out = "run-sample";
    std::int64_t s_n = 64, s_k = -1;
    double s_s = -1.0;
    sample->add_option("--checkpoint", s_ck, "checkpoint file")->required();
    sample->add_option("--n", s_n, "number of samples");
    sample->add_option("--K", s_k, "prior chain steps (default: config K0)");
    sample->add_option("--s", s_s, "prior step size (default: config s0)");
    sample->add_option("--out", s_out, "output directory");

    // reconstruct
    auto* recon = app.add_subcommand("reconstruct", "posterior short-run reconstruction");
    std::string r_ck, r_out = "run-reconstruct";
    std::int64_t r_n = 64;
    recon->add_option("--checkpoint", r_ck, "checkpoint file")->required();
    recon->add_option("--n", r_n, "number of items");
    recon->add_option("--out", r_out, "output directory");

    // score-anomaly
    auto* anom = app.add_subcommand("score-anomaly", "joint-density anomaly scores + AUPRC");
    std::string a_ck, a_imgs, a_labs, a_out = "run-anomaly";
    std::int64_t a_label = 0, a_chains = 0;
    anom->add_option("--checkpoint", a_ck, "checkpoint file")->required();
    anom->add_option("--test-images", a_imgs, "IDX test images")->required();
    anom->add_option("--test-labels", a_labs, "IDX test labels")->required();
    anom->add_option("--anomaly-label", a_label, "label treated as anomalous")->required();
    anom->add_option("--n-chains", a_chains, "posterior chains per item (default: config)");
    anom->add_option("--out", a_out, "output directory");

    // diagnose-chain
    auto* diag = app.add_subcommand("diagnose-chain", "record a prior chain trace + energies");
    std::string d_ck, d_out = "run-diagnose";
    std::int64_t d_n = 16, d_k = -1;
    double d_s = -1.0;
    diag->add_option("--checkpoint", d_ck, "checkpoint file")->required();
    diag->add_option("--n", d_n, "number of chains");
    diag->add_option("--K", d_k, "steps (default: config K0)");
    diag->add_option("--s", d_s, "step size (default: config s0)");
    diag->add_option("--out", d_out, "output directory");

    // check
    auto* check = app.add_subcommand("check", "self-contained oracle checks");
    bool quick = false;
    check->add_flag("--quick", quick, "smaller Monte Carlo sizes");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return k_exit_usage;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, overrides, out_dir, threads_flag);
        if (sample->parsed()) return cmd_sample(s_ck, s_n, s_out, s_k, s_s);
        if (recon->parsed()) return cmd_reconstruct(r_ck, r_n, r_out);
        if (anom->parsed()) {
            return cmd_score_anomaly(a_ck, a_imgs, a_labs, a_label, a_chains, a_out);
        }
        if (diag->parsed()) return cmd_diagnose_chain(d_ck, d_n, d_k, d_s, d_out);
        if (check->parsed()) return cmd_check(quick);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return k_exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return k_exit_runtime;
    }
    return k_exit_usage;
}

}  // namespace lebm::cli
