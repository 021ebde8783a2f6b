#pragma once

// Run configuration, checkpoint metadata conventions, the end-to-end
// run_eval (sample a batch, score it, persist run.json / traj_<i>.csv /
// report.json), and the variant sweep.

#include "glab/eval.hpp"

namespace glab {

inline Json ring_to_json(const RingSpec& s) {
    return Json{{"mu_r", s.mu_r}, {"sigma_r", s.sigma_r}, {"sigma_theta", s.sigma_theta}};
}

inline RingSpec ring_from_json(const Json& j) {
    RingSpec s;
    s.mu_r = j.value("mu_r", s.mu_r);
    s.sigma_r = j.value("sigma_r", s.sigma_r);
    s.sigma_theta = j.value("sigma_theta", s.sigma_theta);
    return s;
}

inline Json schedule_to_json(const NoiseSchedule& s) {
    return Json{{"schedule_kind", to_string(s.kind)},
                {"T", s.T},
                {"beta_start", s.beta_start},
                {"beta_end", s.beta_end}};
}

inline NoiseSchedule schedule_from_json(const Json& j) {
    NoiseSchedule d = default_toy_schedule();
    return build_schedule(schedule_kind_from_string(j.value("schedule_kind", std::string(to_string(d.kind)))),
                          j.value("T", d.T), j.value("beta_start", d.beta_start),
                          j.value("beta_end", d.beta_end));
}

inline Json ablation_to_json(const AblationFlags& f) {
    return Json{{"use_t", f.use_t},
                {"use_delta_norm", f.use_delta_norm},
                {"use_cfgpp_renoise", f.use_cfgpp_renoise},
                {"use_perturbation", f.use_perturbation},
                {"constrain_w", f.constrain_w}};
}

inline AblationFlags ablation_from_json(const Json& j) {
    AblationFlags f;
    f.use_t = j.value("use_t", f.use_t);
    f.use_delta_norm = j.value("use_delta_norm", f.use_delta_norm);
    f.use_cfgpp_renoise = j.value("use_cfgpp_renoise", f.use_cfgpp_renoise);
    f.use_perturbation = j.value("use_perturbation", f.use_perturbation);
    f.constrain_w = j.value("constrain_w", f.constrain_w);
    return f;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// --- typed checkpoint wrappers ---

inline void save_denoiser(const std::string& path, const DenoiserNet& dnet, const RingSpec& spec,
                          const Json& train_meta = Json::object()) {
    Json meta;
    meta["schedule"] = schedule_to_json(dnet.sched);
    meta["ring"] = ring_to_json(spec);
    meta["eps_param"] = dnet.param == EpsParam::X0 ? "x0" : "direct";
    meta["x0_bound"] = dnet.x0_bound;
    meta["train"] = train_meta;
    save_checkpoint(path, dnet.net, "denoiser", meta);
}

inline std::pair<DenoiserNet, RingSpec> load_denoiser(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "denoiser") throw ConfigError(path + " is not a denoiser checkpoint");
    DenoiserNet dnet;
    dnet.net = std::move(ck.net);
    dnet.sched = schedule_from_json(ck.meta.value("schedule", Json::object()));
    dnet.param = ck.meta.value("eps_param", "x0") == std::string("direct") ? EpsParam::Direct
                                                                           : EpsParam::X0;
    dnet.x0_bound = ck.meta.value("x0_bound", dnet.x0_bound);
    return {std::move(dnet), ring_from_json(ck.meta.value("ring", Json::object()))};
}

inline void save_velocity(const std::string& path, const VelocityNet& vnet, const RingSpec& spec,
                          const Json& train_meta = Json::object()) {
    Json meta;
    meta["ring"] = ring_to_json(spec);
    meta["train"] = train_meta;
    save_checkpoint(path, vnet.net, "velocity", meta);
}

inline std::pair<VelocityNet, RingSpec> load_velocity(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "velocity") throw ConfigError(path + " is not a velocity checkpoint");
    VelocityNet vnet;
    vnet.net = std::move(ck.net);
    return {std::move(vnet), ring_from_json(ck.meta.value("ring", Json::object()))};
}

inline void save_scheduler(const std::string& path, const SchedulerNet& snet,
                           std::uint64_t backbone_hash, const std::string& lambda_sampling,
                           const std::string& domain = "diffusion") {
    Json meta;
    meta["delta_max"] = snet.delta_max;
    meta["ablation"] = ablation_to_json(snet.ablation);
    meta["lambda_sampling"] = lambda_sampling;
    meta["backbone_hash"] = hash_hex(backbone_hash);
    meta["T"] = snet.T;
    meta["domain"] = domain;
    save_checkpoint(path, snet.net, "scheduler", meta);
}

inline SchedulerNet load_scheduler(const std::string& path, std::string* domain = nullptr,
                                   std::string* backbone_hash = nullptr) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "scheduler") throw ConfigError(path + " is not a scheduler checkpoint");
    SchedulerNet s;
    s.net = std::move(ck.net);
    s.delta_max = ck.meta.at("delta_max").get<double>();
    s.ablation = ablation_from_json(ck.meta.value("ablation", Json::object()));
    s.T = ck.meta.value("T", 50);
    if (domain) *domain = ck.meta.value("domain", "diffusion");
    if (backbone_hash) *backbone_hash = ck.meta.value("backbone_hash", "");
    return s;
}

// --- run configuration ---

struct RunConfig {
    std::string backbone_path;
    std::string scheduler_path;  // required for anneal mode
    std::string mode = "cfgpp";  // cfg | cfgpp | anneal
    std::string sampler = "ddim";
    double c = 3.0 * kPi / 4.0;
    double w = 0.15;
    double lambda = 0.7;
    int seeds = 200;
    std::uint64_t seed_base = 0;
    std::string out_dir;
    bool resample_c = false;
    int flow_steps = 100;

    Json to_json() const {
        Json j;
        j["backbone"] = backbone_path;
        j["scheduler"] = scheduler_path;
        j["mode"] = mode;
        j["sampler"] = sampler;
        j["c"] = c;
        j["w"] = w;
        j["lambda"] = lambda;
        j["seeds"] = seeds;
        j["seed_base"] = seed_base;
        j["out"] = out_dir;
        j["resample_c"] = resample_c;
        j["flow_steps"] = flow_steps;
        return j;
    }

    static RunConfig from_json(const Json& j) {
        RunConfig c;
        c.backbone_path = j.value("backbone", "");
        c.scheduler_path = j.value("scheduler", "");
        c.mode = j.value("mode", c.mode);
        c.sampler = j.value("sampler", c.sampler);
        c.c = j.value("c", c.c);
        c.w = j.value("w", c.w);
        c.lambda = j.value("lambda", c.lambda);
        c.seeds = j.value("seeds", c.seeds);
        c.seed_base = j.value("seed_base", c.seed_base);
        c.out_dir = j.value("out", "");
        c.resample_c = j.value("resample_c", c.resample_c);
        c.flow_steps = j.value("flow_steps", c.flow_steps);
        return c;
    }
};

namespace detail {

inline std::string run_label(const RunConfig& cfg) {
    std::string p = cfg.mode == "anneal" ? "lambda=" + format_double(cfg.lambda)
                                         : "w=" + format_double(cfg.w);
    return cfg.mode + " " + p;
}

}  // namespace detail

struct RunResult {
    EvalReport report;
    std::vector<Trajectory> trajectories;
    RingSpec ring;
};

inline void write_run_dir(const RunConfig& cfg, const RunResult& res);
inline SchedulerTrainConfig scheduler_train_config_from_json(const Json& j);

// Samples the batch, scores it and (when out_dir is set) persists the run
// layout. All writes happen after computation completes.
inline RunResult run_eval(const RunConfig& cfg) {
    if (cfg.mode != "cfg" && cfg.mode != "cfgpp" && cfg.mode != "anneal")
        throw ConfigError("run_eval: unknown mode '" + cfg.mode + "'");

    Checkpoint probe = load_checkpoint(cfg.backbone_path);
    bool is_flow = probe.kind == "velocity";
    if (probe.kind != "denoiser" && probe.kind != "velocity")
        throw ConfigError("run_eval: backbone must be a denoiser or velocity checkpoint");

    SchedulerNet snet;
    GuidanceMode mode = GuidanceMode::cfg(cfg.w);
    if (cfg.mode == "cfgpp") mode = GuidanceMode::cfgpp(cfg.w);
    if (cfg.mode == "anneal") {
        if (cfg.scheduler_path.empty())
            throw ConfigError("run_eval: anneal mode requires a scheduler checkpoint");
        std::string hash;
        snet = load_scheduler(cfg.scheduler_path, nullptr, &hash);
        if (!hash.empty() && hash != hash_hex(param_hash(probe.net)))
            throw ConfigError("run_eval: scheduler was trained against a different backbone");
        mode = GuidanceMode::annealing(snet, cfg.lambda);
    }

    RunResult res;
    std::string label = detail::run_label(cfg);
    if (is_flow) {
        auto [vnet, ring] = load_velocity(cfg.backbone_path);
        res.ring = ring;
        auto batch = evaluate_flow(vnet, mode, cfg.c, cfg.flow_steps, cfg.seeds, cfg.seed_base, ring,
                                   label, cfg.resample_c);
        res.trajectories = std::move(batch.trajectories);
        res.report = batch.report;
    } else {
        auto [dnet, ring] = load_denoiser(cfg.backbone_path);
        res.ring = ring;
        auto batch = evaluate_diffusion(dnet, mode, sampler_from_string(cfg.sampler), cfg.c, cfg.seeds,
                                        cfg.seed_base, ring, label, cfg.resample_c);
        res.trajectories = std::move(batch.trajectories);
        res.report = batch.report;
    }

    if (!cfg.out_dir.empty()) write_run_dir(cfg, res);
    return res;
}

inline void write_run_dir(const RunConfig& cfg, const RunResult& res) {
    fs::create_directories(cfg.out_dir);
    Json run_json = cfg.to_json();
    run_json["ring"] = ring_to_json(res.ring);
    write_text_file((fs::path(cfg.out_dir) / "run.json").string(), run_json.dump(2) + "\n");
    for (std::size_t i = 0; i < res.trajectories.size(); ++i) {
        const auto& tr = res.trajectories[i];
        std::string stem = "traj_" + std::to_string(i);
        write_text_file((fs::path(cfg.out_dir) / (stem + ".csv")).string(), trajectory_to_csv(tr));
        Json side{{"mode", tr.mode},        {"sampler", tr.sampler},
                  {"seed", tr.seed},        {"c", tr.c_angle},
                  {"guidance_param", tr.guidance_param}};
        write_text_file((fs::path(cfg.out_dir) / (stem + ".json")).string(), side.dump(2) + "\n");
    }
    write_text_file((fs::path(cfg.out_dir) / "report.json").string(),
                    res.report.to_json().dump(2) + "\n");
}

// Recompute the report purely from the exported CSVs (the independent
// arithmetic path used by `eval`).
inline EvalReport report_from_run_dir(const std::string& run_dir) {
    fs::path dir(run_dir);
    if (!fs::exists(dir / "run.json")) throw IoError("no run.json in " + run_dir);
    Json run_json;
    {
        std::ifstream in(dir / "run.json");
        in >> run_json;
    }
    RunConfig cfg = RunConfig::from_json(run_json);
    RingSpec ring = ring_from_json(run_json.value("ring", Json::object()));

    std::vector<Vec> endpoints;
    std::vector<double> conditions;
    double w_sum = 0.0;
    std::size_t w_count = 0;
    for (int i = 0;; ++i) {
        fs::path csv = dir / ("traj_" + std::to_string(i) + ".csv");
        if (!fs::exists(csv)) break;
        TrajectoryCsv tc = parse_trajectory_csv(csv.string());
        endpoints.push_back(tc.endpoint);
        double c_i = cfg.c;
        fs::path side = dir / ("traj_" + std::to_string(i) + ".json");
        if (fs::exists(side)) {
            Json sj;
            std::ifstream in(side);
            in >> sj;
            c_i = sj.value("c", cfg.c);
        }
        conditions.push_back(c_i);
        for (double w : tc.w) {
            w_sum += w;
            ++w_count;
        }
    }
    if (endpoints.empty()) throw IoError("no trajectories in " + run_dir);

    EvalReport r;
    r.n_samples = static_cast<int>(endpoints.size());
    r.adherence_rate = adherence_rate(endpoints, cfg.c);
    r.on_manifold_rate = on_manifold_rate(endpoints, ring);
    r.coverage = coverage_rate(endpoints, conditions);
    r.mean_w = w_count ? w_sum / static_cast<double>(w_count) : 0.0;
    r.label = detail::run_label(cfg);
    return r;
}

// --- sweep ---

// Variants share the backbone and eval settings; anneal variants train their
// own scheduler. A failing variant gets an error marker row and the sweep
// continues.
inline std::string sweep(const Json& sweep_config, const std::string& out_csv) {
    std::string backbone = sweep_config.at("backbone").get<std::string>();
    Json eval_cfg = sweep_config.value("eval", Json::object());
    Json train_cfg = sweep_config.value("scheduler_train", Json::object());

    std::ostringstream os;
    os << "name,status,n,adherence_rate,on_manifold_rate,coverage,mean_w,error\n";

    for (const auto& variant : sweep_config.at("variants")) {
        std::string name = variant.at("name").get<std::string>();
        std::string err;
        EvalReport rep;
        bool ok = true;
        try {
            RunConfig rc;
            rc.backbone_path = backbone;
            rc.mode = variant.value("mode", "anneal");
            rc.sampler = eval_cfg.value("sampler", "ddim");
            rc.c = eval_cfg.value("c", 3.0 * kPi / 4.0);
            rc.seeds = eval_cfg.value("seeds", 200);
            rc.seed_base = eval_cfg.value("seed_base", std::uint64_t(0));
            rc.resample_c = eval_cfg.value("resample_c", false);
            rc.flow_steps = eval_cfg.value("flow_steps", 100);
            rc.w = variant.value("w", 0.15);
            rc.lambda = variant.value("lambda", 0.7);

            if (rc.mode == "anneal") {
                auto [dnet, ring] = load_denoiser(backbone);
                SchedulerTrainConfig tc = scheduler_train_config_from_json(train_cfg);
                if (variant.contains("ablation"))
                    tc.ablation = ablation_from_json(variant["ablation"]);
                if (variant.contains("perturb_s")) tc.perturb.s = variant["perturb_s"].get<double>();
                if (variant.contains("steps")) tc.steps = variant["steps"].get<int>();
                if (variant.contains("lambda_fixed"))
                    tc.lambda_fixed = variant["lambda_fixed"].get<double>();
                SchedulerNet snet = train_scheduler(tc, dnet, ring);
                auto batch = evaluate_diffusion(dnet, GuidanceMode::annealing(snet, rc.lambda),
                                                sampler_from_string(rc.sampler), rc.c, rc.seeds,
                                                rc.seed_base, ring, name, rc.resample_c);
                rep = batch.report;
            } else {
                rc.out_dir.clear();
                rep = run_eval(rc).report;
            }
        } catch (const std::exception& e) {
            ok = false;
            err = e.what();
            for (auto& ch : err)
                if (ch == ',' || ch == '\n') ch = ';';
        }
        if (ok) {
            os << name << ",ok," << rep.n_samples << ',' << format_double(rep.adherence_rate) << ','
               << format_double(rep.on_manifold_rate) << ',' << format_double(rep.coverage) << ','
               << format_double(rep.mean_w) << ",\n";
        } else {
            os << name << ",error,0,,,,," << err << "\n";
        }
    }

    std::string csv = os.str();
    if (!out_csv.empty()) write_text_file(out_csv, csv);
    return csv;
}

inline SchedulerTrainConfig scheduler_train_config_from_json(const Json& j) {
    SchedulerTrainConfig c;
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.grad_accum = j.value("grad_accum", c.grad_accum);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.perturb.s = j.value("perturb_s", c.perturb.s);
    c.perturb.psi = j.value("perturb_psi", c.perturb.psi);
    c.perturb.enabled = j.value("perturb_enabled", c.perturb.enabled);
    c.perturb.reverse_time = j.value("perturb_reverse_time", c.perturb.reverse_time);
    if (j.contains("lambda_fixed")) c.lambda_fixed = j["lambda_fixed"].get<double>();
    if (j.contains("delta_max")) c.delta_max_override = j["delta_max"].get<double>();
    c.delta_max_probes = j.value("delta_max_probes", c.delta_max_probes);
    c.flow_steps_per_unit = j.value("flow_steps_per_unit", c.flow_steps_per_unit);
    if (j.contains("hidden_dims")) c.hidden_dims = j["hidden_dims"].get<std::vector<int>>();
    if (j.contains("ablation")) c.ablation = ablation_from_json(j["ablation"]);
    std::string de = j.value("delta_eval_timestep", "prev");
    c.delta_eval = de == "same" ? DeltaEvalTimestep::Same : DeltaEvalTimestep::Prev;
    std::string fe = j.value("flow_eps_target", "guided");
    c.flow_eps_target = fe == "conditional" ? FlowEpsTarget::Conditional : FlowEpsTarget::Guided;
    return c;
}

inline BackboneTrainConfig backbone_train_config_from_json(const Json& j) {
    BackboneTrainConfig c;
    c.dataset_size = j.value("dataset_size", c.dataset_size);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.p_uncond = j.value("p_uncond", c.p_uncond);
    c.seed = j.value("seed", c.seed);
    if (j.contains("hidden_dims")) c.hidden_dims = j["hidden_dims"].get<std::vector<int>>();
    if (j.contains("eps_param"))
        c.eps_param = j["eps_param"].get<std::string>() == "direct" ? EpsParam::Direct : EpsParam::X0;
    c.x0_bound = j.value("x0_bound", c.x0_bound);
    return c;
}

}  // namespace glab
