// Command-line surface for the toy guidance laboratory. Every subcommand
// reads JSON configs; explicit flags override config keys. Exit code 0 on
// success, 1 with a single-line error otherwise.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "glab/glab.hpp"

namespace {

using namespace glab;

Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IoError("bad json in " + path + ": " + e.what());
    }
    return j;
}

struct TrainBackboneArgs {
    std::string config_path;
    std::string out_path;
    int steps = -1;
    long seed = -1;
};

int run_train_denoiser(const TrainBackboneArgs& args) {
    Json cfg = args.config_path.empty() ? Json::object() : load_json_file(args.config_path);
    BackboneTrainConfig tc = backbone_train_config_from_json(cfg);
    if (args.steps >= 0) tc.steps = args.steps;
    if (args.seed >= 0) tc.seed = static_cast<std::uint64_t>(args.seed);
    RingSpec ring = ring_from_json(cfg.value("ring", Json::object()));
    NoiseSchedule sched = schedule_from_json(cfg);

    std::vector<double> losses;
    DenoiserNet dnet = train_denoiser(tc, ring, sched, &losses);
    Json meta{{"steps", tc.steps}, {"batch_size", tc.batch_size}, {"seed", tc.seed},
              {"p_uncond", tc.p_uncond}};
    if (!losses.empty()) meta["final_loss"] = losses.back();
    save_denoiser(args.out_path, dnet, ring, meta);
    std::cout << "wrote " << args.out_path;
    if (!losses.empty()) std::cout << " (final loss " << format_double(losses.back()) << ")";
    std::cout << "\n";
    return 0;
}

int run_train_flow(const TrainBackboneArgs& args) {
    Json cfg = args.config_path.empty() ? Json::object() : load_json_file(args.config_path);
    BackboneTrainConfig tc = backbone_train_config_from_json(cfg);
    if (args.steps >= 0) tc.steps = args.steps;
    if (args.seed >= 0) tc.seed = static_cast<std::uint64_t>(args.seed);
    RingSpec ring = ring_from_json(cfg.value("ring", Json::object()));

    std::vector<double> losses;
    VelocityNet vnet = train_velocity(tc, ring, &losses);
    Json meta{{"steps", tc.steps}, {"batch_size", tc.batch_size}, {"seed", tc.seed}};
    if (!losses.empty()) meta["final_loss"] = losses.back();
    save_velocity(args.out_path, vnet, ring, meta);
    std::cout << "wrote " << args.out_path << "\n";
    return 0;
}

struct TrainSchedulerArgs {
    std::string backbone_path;
    std::string config_path;
    std::string out_path;
    bool no_t = false;
    bool no_delta = false;
    bool constrain_w = false;
    bool no_renoise = false;
    bool no_perturb = false;
    double perturb_s = -1.0;
    int steps = -1;
    long seed = -1;
    double lambda_fixed = -1.0;
};

int run_train_scheduler(const TrainSchedulerArgs& args) {
    Json cfg = args.config_path.empty() ? Json::object() : load_json_file(args.config_path);
    SchedulerTrainConfig tc = scheduler_train_config_from_json(cfg);
    if (args.no_t) tc.ablation.use_t = false;
    if (args.no_delta) tc.ablation.use_delta_norm = false;
    if (args.constrain_w) tc.ablation.constrain_w = true;
    if (args.no_renoise) tc.ablation.use_cfgpp_renoise = false;
    if (args.no_perturb) tc.ablation.use_perturbation = false;
    if (args.perturb_s >= 0.0) tc.perturb.s = args.perturb_s;
    if (args.steps >= 0) tc.steps = args.steps;
    if (args.seed >= 0) tc.seed = static_cast<std::uint64_t>(args.seed);
    if (args.lambda_fixed >= 0.0) tc.lambda_fixed = args.lambda_fixed;

    Checkpoint probe = load_checkpoint(args.backbone_path);
    std::string lambda_desc = tc.lambda_fixed ? "fixed:" + format_double(*tc.lambda_fixed)
                                              : std::string("uniform[0,1]");
    if (probe.kind == "velocity") {
        auto [vnet, ring] = load_velocity(args.backbone_path);
        SchedulerNet snet = train_flow_scheduler(tc, vnet, ring);
        save_scheduler(args.out_path, snet, param_hash(vnet.net), lambda_desc, "flow");
    } else {
        auto [dnet, ring] = load_denoiser(args.backbone_path);
        SchedulerNet snet = train_scheduler(tc, dnet, ring);
        save_scheduler(args.out_path, snet, param_hash(dnet.net), lambda_desc, "diffusion");
    }
    std::cout << "wrote " << args.out_path << "\n";
    return 0;
}

int run_sample(RunConfig cfg, const std::string& config_path) {
    if (!config_path.empty()) {
        Json j = load_json_file(config_path);
        RunConfig base = RunConfig::from_json(j);
        // explicit flags already populated cfg; fill gaps from the file
        if (cfg.backbone_path.empty()) cfg.backbone_path = base.backbone_path;
        if (cfg.scheduler_path.empty()) cfg.scheduler_path = base.scheduler_path;
        if (cfg.out_dir.empty()) cfg.out_dir = base.out_dir;
    }
    if (cfg.backbone_path.empty()) throw ConfigError("sample: --backbone is required");
    if (cfg.out_dir.empty()) throw ConfigError("sample: --out is required");
    RunResult res = run_eval(cfg);
    std::cout << "report: adherence " << format_double(res.report.adherence_rate) << ", on-manifold "
              << format_double(res.report.on_manifold_rate) << ", coverage "
              << format_double(res.report.coverage) << ", mean w " << format_double(res.report.mean_w)
              << "\n";
    return 0;
}

int run_eval_cmd(const std::string& run_dir) {
    EvalReport rep = report_from_run_dir(run_dir);
    write_text_file((fs::path(run_dir) / "report.json").string(), rep.to_json().dump(2) + "\n");
    std::cout << rep.to_json().dump() << "\n";
    return 0;
}

int run_heatmap(const std::string& backbone, int t, double tf, double c, const std::string& out) {
    Checkpoint probe = load_checkpoint(backbone);
    std::vector<Vec> m;
    if (probe.kind == "velocity") {
        auto [vnet, ring] = load_velocity(backbone);
        m = flow_delta_norm_heatmap(vnet, tf, c);
    } else {
        auto [dnet, ring] = load_denoiser(backbone);
        m = delta_norm_heatmap(dnet, t, c);
    }
    write_text_file(out, matrix_to_csv(m));
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_whmap(const std::string& scheduler, double lambda, const std::string& out) {
    SchedulerNet snet = load_scheduler(scheduler);
    std::vector<int> t_grid;
    for (int t = 1; t <= snet.T; ++t) t_grid.push_back(t);
    Vec delta_grid;
    for (int j = 0; j < 64; ++j) delta_grid.push_back(snet.delta_max * j / 63.0);
    write_text_file(out, matrix_to_csv(w_heatmap(snet, lambda, t_grid, delta_grid)));
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"2D toy laboratory for learned guidance-scale scheduling"};
    app.require_subcommand(1);

    TrainBackboneArgs td;
    auto* cmd_td = app.add_subcommand("train-denoiser", "Train the conditional diffusion backbone");
    cmd_td->add_option("--config", td.config_path, "JSON config");
    cmd_td->add_option("--out", td.out_path, "checkpoint path")->required();
    cmd_td->add_option("--steps", td.steps, "override step count");
    cmd_td->add_option("--seed", td.seed, "override seed");

    TrainBackboneArgs tf;
    auto* cmd_tf = app.add_subcommand("train-flow", "Train the conditional velocity field");
    cmd_tf->add_option("--config", tf.config_path, "JSON config");
    cmd_tf->add_option("--out", tf.out_path, "checkpoint path")->required();
    cmd_tf->add_option("--steps", tf.steps, "override step count");
    cmd_tf->add_option("--seed", tf.seed, "override seed");

    TrainSchedulerArgs ts;
    auto* cmd_ts = app.add_subcommand("train-scheduler", "Train the guidance-scale scheduler");
    cmd_ts->add_option("--backbone", ts.backbone_path, "backbone checkpoint")->required();
    cmd_ts->add_option("--config", ts.config_path, "JSON config");
    cmd_ts->add_option("--out", ts.out_path, "checkpoint path")->required();
    cmd_ts->add_flag("--no-t", ts.no_t, "drop the timestep input");
    cmd_ts->add_flag("--no-delta", ts.no_delta, "drop the delta-norm input");
    cmd_ts->add_flag("--constrain-w", ts.constrain_w, "sigmoid-constrain w to (0,1)");
    cmd_ts->add_flag("--no-renoise", ts.no_renoise, "renoise with eps_hat instead of eps_null");
    cmd_ts->add_flag("--no-perturb", ts.no_perturb, "disable condition perturbation");
    cmd_ts->add_option("--perturb-s", ts.perturb_s, "perturbation noise scale");
    cmd_ts->add_option("--steps", ts.steps, "override step count");
    cmd_ts->add_option("--seed", ts.seed, "override seed");
    cmd_ts->add_option("--lambda-fixed", ts.lambda_fixed, "train with a fixed lambda");

    RunConfig sc;
    std::string sample_config;
    auto* cmd_sample = app.add_subcommand("sample", "Sample guided trajectories and score them");
    cmd_sample->add_option("--config", sample_config, "JSON run config");
    cmd_sample->add_option("--backbone", sc.backbone_path, "backbone checkpoint");
    cmd_sample->add_option("--scheduler", sc.scheduler_path, "scheduler checkpoint");
    cmd_sample->add_option("--mode", sc.mode, "cfg | cfgpp | anneal");
    cmd_sample->add_option("--sampler", sc.sampler, "ddim | euler | euler-a");
    cmd_sample->add_option("--c", sc.c, "condition angle in radians");
    cmd_sample->add_option("--w", sc.w, "constant guidance scale");
    cmd_sample->add_option("--lambda", sc.lambda, "scheduler trade-off knob");
    cmd_sample->add_option("--seeds", sc.seeds, "number of trajectories");
    cmd_sample->add_option("--seed-base", sc.seed_base, "first seed");
    cmd_sample->add_option("--out", sc.out_dir, "output run directory");
    cmd_sample->add_option("--flow-steps", sc.flow_steps, "flow integration steps");
    cmd_sample->add_flag("--resample-c", sc.resample_c, "draw a fresh condition per trajectory");

    std::string eval_dir;
    auto* cmd_eval = app.add_subcommand("eval", "Recompute the report from a run directory");
    cmd_eval->add_option("--run", eval_dir, "run directory")->required();

    std::string hm_backbone, hm_out;
    int hm_t = 1;
    double hm_tf = 1.0;
    double hm_c = 3.0 * glab::kPi / 4.0;
    auto* cmd_hm = app.add_subcommand("heatmap", "Delta-norm landscape on a grid");
    cmd_hm->add_option("--backbone", hm_backbone, "backbone checkpoint")->required();
    cmd_hm->add_option("--t", hm_t, "diffusion timestep");
    cmd_hm->add_option("--tf", hm_tf, "flow time in [0,1] (velocity backbones)");
    cmd_hm->add_option("--c", hm_c, "condition angle in radians");
    cmd_hm->add_option("--out", hm_out, "output csv")->required();

    std::string wm_scheduler, wm_out;
    double wm_lambda = 0.7;
    auto* cmd_wm = app.add_subcommand("whmap", "Predicted w over (t, |delta|)");
    cmd_wm->add_option("--scheduler", wm_scheduler, "scheduler checkpoint")->required();
    cmd_wm->add_option("--lambda", wm_lambda, "lambda");
    cmd_wm->add_option("--out", wm_out, "output csv")->required();

    std::string sweep_config, sweep_out;
    auto* cmd_sweep = app.add_subcommand("sweep", "Run a table of variants");
    cmd_sweep->add_option("--config", sweep_config, "sweep JSON config")->required();
    cmd_sweep->add_option("--out", sweep_out, "output csv")->required();

    std::string plot_dir;
    auto* cmd_plot = app.add_subcommand("plot", "Emit SVG plots for a run directory");
    cmd_plot->add_option("--run", plot_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_td->parsed()) return run_train_denoiser(td);
        if (cmd_tf->parsed()) return run_train_flow(tf);
        if (cmd_ts->parsed()) return run_train_scheduler(ts);
        if (cmd_sample->parsed()) return run_sample(sc, sample_config);
        if (cmd_eval->parsed()) return run_eval_cmd(eval_dir);
        if (cmd_hm->parsed()) return run_heatmap(hm_backbone, hm_t, hm_tf, hm_c, hm_out);
        if (cmd_wm->parsed()) return run_whmap(wm_scheduler, wm_lambda, wm_out);
        if (cmd_sweep->parsed()) {
            glab::sweep(load_json_file(sweep_config), sweep_out);
            std::cout << "wrote " << sweep_out << "\n";
            return 0;
        }
        if (cmd_plot->parsed()) {
            auto files = glab::export_plots(plot_dir);
            std::cout << "wrote " << files.size() << " plot(s)\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
