#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specrf/config.hpp"
#include "specrf/dataset.hpp"
#include "specrf/diffusion.hpp"
#include "specrf/metrics.hpp"
#include "specrf/train.hpp"

namespace fs = std::filesystem;
using namespace specrf;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_override;
    std::string data_override;
    std::string mode_override;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_config = true) {
    auto* c = cmd->add_option("--config", o.config_path, "run config file (key = value)");
    if (needs_config) c->required();
    cmd->add_option("--seed", o.seed, "master seed override");
    cmd->add_option("--out", o.out_override, "output directory override");
    cmd->add_option("--data", o.data_override, "dataset directory override");
}

RunConfig resolved(const CommonOpts& o) {
    RunConfig cfg = load_run_config(o.config_path);
    if (o.seed) set_run_seed(cfg, *o.seed);
    if (!o.out_override.empty())
        cfg.out_dir = fs::absolute(o.out_override).lexically_normal().string();
    if (!o.data_override.empty())
        cfg.data_dir = fs::absolute(o.data_override).lexically_normal().string();
    if (!o.mode_override.empty()) cfg.train.mode = embed_mode_from_string(o.mode_override);
    return cfg;
}

DatasetManifest open_dataset(const RunConfig& cfg) {
    return load_manifest((fs::path(cfg.data_dir) / "manifest.txt").string());
}

int run_gen(const CommonOpts& o, bool paper_scale) {
    RunConfig cfg = resolved(o);
    if (paper_scale) {
        cfg.dataset.n_train = 64;
        cfg.dataset.n_test = 36;
    }
    DatasetManifest man = generate_dataset(cfg.dataset, cfg.data_dir);
    echo_config(cfg, cfg.data_dir);
    std::printf("dataset: %d train + %d test views at %dx%d -> %s\n", man.n_train, man.n_test,
                man.resolution, man.resolution, cfg.data_dir.c_str());
    return 0;
}

int run_train(const CommonOpts& o, const std::string& resume) {
    RunConfig cfg = resolved(o);
    DatasetManifest man = open_dataset(cfg);
    echo_config(cfg, cfg.out_dir);
    ModelState state = fit(man, cfg.train, cfg.out_dir, resume);
    std::printf("trained %s model for %lld steps -> %s\n", embed_mode_name(state.mode),
                static_cast<long long>(state.step),
                (fs::path(cfg.out_dir) / "checkpoint.srf").string().c_str());
    return 0;
}

void print_report(const EvalReport& rep) {
    for (const EvalRow& r : rep.rows)
        std::printf("  %-10s psnr %7.3f  ssim %7.4f\n", r.name.c_str(), r.psnr, r.ssim);
    std::printf("  %-10s psnr %7.3f  ssim %7.4f\n", "mean", rep.mean_psnr, rep.mean_ssim);
}

int run_eval(const CommonOpts& o, std::string ckpt_path) {
    RunConfig cfg = resolved(o);
    DatasetManifest man = open_dataset(cfg);
    if (ckpt_path.empty()) ckpt_path = (fs::path(cfg.out_dir) / "checkpoint.srf").string();

    ModelState state = init_model(cfg.train, man.n_train);
    load_checkpoint(ckpt_path, state);
    EvalReport rep = evaluate(state, man, cfg.train.sampler, cfg.eval_seed);

    fs::create_directories(cfg.out_dir);
    echo_config(cfg, cfg.out_dir);
    std::string csv = (fs::path(cfg.out_dir) / "eval.csv").string();
    write_report(rep, csv);
    std::printf("eval of %s (step %lld, fingerprint %s):\n", ckpt_path.c_str(),
                static_cast<long long>(state.step), rep.fingerprint.c_str());
    print_report(rep);
    std::printf("report -> %s\n", csv.c_str());
    return 0;
}

int run_ablate(const CommonOpts& o) {
    RunConfig cfg = resolved(o);
    generate_dataset(cfg.dataset, cfg.data_dir);
    DatasetManifest man = open_dataset(cfg);
    fs::create_directories(cfg.out_dir);
    echo_config(cfg, cfg.out_dir);

    // Same dataset, same seed, same substream names: the three runs differ
    // only in how the embedding row enters the shading network.
    const EmbedMode modes[] = {EmbedMode::None, EmbedMode::Appearance, EmbedMode::Shading};
    std::string table = "mode,psnr,ssim\n";
    for (EmbedMode m : modes) {
        TrainConfig tc = cfg.train;
        tc.mode = m;
        std::string sub = (fs::path(cfg.out_dir) / embed_mode_name(m)).string();
        std::printf("== training %s ==\n", embed_mode_name(m));
        std::fflush(stdout);
        ModelState state = fit(man, tc, sub);
        EvalReport rep = evaluate(state, man, tc.sampler, cfg.eval_seed);
        write_report(rep, (fs::path(sub) / "eval.csv").string());
        char row[96];
        std::snprintf(row, sizeof(row), "%s,%.4f,%.6f\n", embed_mode_name(m), rep.mean_psnr,
                      rep.mean_ssim);
        table += row;
        std::printf("%s: psnr %.3f ssim %.4f\n", embed_mode_name(m), rep.mean_psnr, rep.mean_ssim);
        std::fflush(stdout);
    }

    std::string csv = (fs::path(cfg.out_dir) / "ablation.csv").string();
    std::ofstream out(csv, std::ios::binary);
    if (!out) throw IoError("cannot write " + csv);
    out << table;
    std::printf("\n%s", table.c_str());
    std::printf("table -> %s\n", csv.c_str());
    return 0;
}

int run_schedule(bool table, const std::string& out_path) {
    NoiseSchedule s = make_schedule();
    auto ddim = ddim_timesteps(50, s.steps());
    if (!table) {
        std::printf("schedule: %d steps, beta %.6g .. %.6g\n", s.steps(), s.beta.front(),
                    s.beta.back());
        return 0;
    }
    std::string csv = "t,beta,alpha_bar,ddim50\n";
    std::vector<char> in_ddim(static_cast<size_t>(s.steps()), 0);
    for (int t : ddim) in_ddim[static_cast<size_t>(t)] = 1;
    char row[96];
    for (int t = 0; t < s.steps(); ++t) {
        std::snprintf(row, sizeof(row), "%d,%.10g,%.10g,%d\n", t, s.beta[static_cast<size_t>(t)],
                      s.alpha_bar[static_cast<size_t>(t)], static_cast<int>(in_ddim[static_cast<size_t>(t)]));
        csv += row;
    }
    if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
        return 0;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + out_path);
    out << csv;
    std::printf("wrote %s (%d rows)\n", out_path.c_str(), s.steps());
    std::string list = "ddim50:";
    for (size_t i = 0; i < ddim.size(); ++i) list += (i ? "," : " ") + std::to_string(ddim[i]);
    std::printf("%s\n", list.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"specular radiance fields: dataset, training, evaluation, relight schedule"};
    app.require_subcommand(1);

    CommonOpts gen_o, train_o, eval_o, ablate_o;
    bool paper_scale = false;
    std::string resume, ckpt_path, sched_out;
    bool sched_table = false;

    CLI::App* gen = app.add_subcommand("gen", "render a synthetic dataset");
    add_common(gen, gen_o);
    gen->add_flag("--paper-scale", paper_scale, "64 train + 36 test views");

    CLI::App* train = app.add_subcommand("train", "optimize a model on a dataset");
    add_common(train, train_o);
    train->add_option("--mode", train_o.mode_override, "embedding mode: none|appearance|shading");
    train->add_option("--resume", resume, "checkpoint to continue from");

    CLI::App* eval = app.add_subcommand("eval", "score test views against a checkpoint");
    add_common(eval, eval_o);
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file (default: <out>/checkpoint.srf)");

    CLI::App* ablate = app.add_subcommand("ablate", "train and score all three embedding modes");
    add_common(ablate, ablate_o);

    CLI::App* sched = app.add_subcommand("schedule", "inspect the relighting noise schedule");
    sched->add_flag("--table", sched_table, "emit the full 1024-row CSV");
    sched->add_option("--out", sched_out, "write the CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return run_gen(gen_o, paper_scale);
        if (train->parsed()) return run_train(train_o, resume);
        if (eval->parsed()) return run_eval(eval_o, ckpt_path);
        if (ablate->parsed()) return run_ablate(ablate_o);
        if (sched->parsed()) return run_schedule(sched_table, sched_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
