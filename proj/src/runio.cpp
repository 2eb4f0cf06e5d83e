#include "orbitforge/runio.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace orbitforge {
namespace runio {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void require_stream(const std::ofstream& out, const std::string& path) {
    if (!out) throw std::runtime_error("cannot open output file " + path);
}

}  // namespace

void write_trajectory_csv(const std::string& path, const ManifoldModel& model,
                          const TimeFactor& tf, const DiscreteCurve& q) {
    std::ofstream out(path);
    require_stream(out, path);
    const WindowGrid& g = *q.grid;
    const int dim = model.dim();
    out << "xi,t";
    for (int a = 0; a < dim; ++a) out << ",q" << a;
    out << ",speed,energy\n";
    const Eigen::VectorXd sp = speed_per_cell(model, q);
    const Eigen::VectorXd en = energy_per_cell(model, tf, q);
    for (int i = 0; i < g.node_count(); ++i) {
        // node speed/energy: average of adjacent cell values
        double s, e;
        if (i == 0) {
            s = sp[0];
            e = en[0];
        } else if (i == g.node_count() - 1) {
            s = sp[g.cells() - 1];
            e = en[g.cells() - 1];
        } else {
            s = 0.5 * (sp[i - 1] + sp[i]);
            e = 0.5 * (en[i - 1] + en[i]);
        }
        out << fmt17(g.nodes[i]) << ',' << fmt17(tf.t_of_xi(g.nodes[i]));
        for (int a = 0; a < dim; ++a) out << ',' << fmt17(q.points[i][a]);
        out << ',' << fmt17(s) << ',' << fmt17(e) << '\n';
    }
}

json certificate_json(const KantorovichCertificate& c) {
    json j;
    j["a_inv_bound"] = c.a_inv_bound;
    j["b_step"] = c.b_step;
    j["C_L"] = c.C_L;
    j["l"] = c.l;
    j["r_star"] = c.r_star;
    j["trust_radius"] = c.trust_radius;
    j["passed"] = c.passed;
    j["predicted_rates"] = c.predicted_rates;
    return j;
}

json stage_bounds_json(const StageBounds& b) {
    json j;
    j["k"] = b.k;
    j["xi_k"] = b.xi_k;
    j["xi_next"] = b.xi_next;
    j["xi_hat_measured"] = b.xi_hat_measured;
    j["zeta_k"] = b.zeta_k;
    j["h_k"] = b.h_k;
    j["eta_k"] = b.eta_k;
    j["L_k"] = b.L_k;
    j["I_hat_k"] = b.I_hat_k;
    j["DeltaI_k"] = b.DeltaI_k;
    j["mu"] = b.mu;
    j["b_k"] = b.b_k;
    j["Delta_k"] = b.Delta_k;
    j["a_k"] = b.a_k;
    j["gamma_k"] = b.gamma_k;
    j["active_branch"] = b.active_branch;
    j["entry_bound_valid"] = b.entry_bound_valid;
    return j;
}

json stage_record_json(const StageRecord& r) {
    json j;
    j["k"] = r.k;
    j["eps_k"] = r.eps_k;
    j["p_target"] = r.p_target;
    j["p_realized"] = r.p_realized;
    j["gamma_measured"] = r.gamma_measured;
    j["gamma_floor"] = r.gamma_floor;
    j["gamma_init_measured"] = r.gamma_init_measured;
    j["A_k"] = r.A_k;
    j["drift_sum"] = r.drift_sum;
    j["residual_final"] = r.residual_final;
    j["newton_iterations"] = r.newton_iterations;
    j["action_before"] = r.action_before;
    j["action_after"] = r.action_after;
    j["boundary_speed_plus"] = r.boundary_speed_plus;
    j["boundary_speed_minus"] = r.boundary_speed_minus;
    j["boundary_speed_bound"] = r.boundary_speed_bound;
    j["b_k_power"] = r.b_k_power;
    j["Delta_k_power"] = r.Delta_k_power;
    j["gap_lemma11"] = r.gap_lemma11;
    j["heuristic"] = r.heuristic;
    j["schedule_note"] = r.schedule_note;
    j["bounds"] = stage_bounds_json(r.bounds);
    j["lipschitz"] = {{"C_r", r.lip.C_r}, {"C_L", r.lip.C_L}, {"J_k", r.lip.J_k},
                      {"R_ball", r.lip.R_ball}};
    j["certificate"] = certificate_json(r.certificate);
    json tr = json::array();
    for (size_t i = 0; i < r.trace.entries.size(); ++i) {
        const auto& e = r.trace.entries[i];
        json te;
        te["iter"] = e.iter;
        te["residual"] = e.residual;
        te["step_norm"] = e.step_norm;
        te["gamma"] = e.gamma;
        if (i < r.trace.dist_to_final.size()) te["dist_to_final"] = r.trace.dist_to_final[i];
        tr.push_back(te);
    }
    j["trace"] = tr;
    j["termination"] = r.trace.termination;
    return j;
}

json seed_report_json(const SeedReport& r) {
    json j;
    j["xi_0"] = r.xi_0;
    j["C_Gamma"] = r.C_Gamma;
    j["C_xi0"] = r.C_xi0;
    j["C_D1"] = r.C_D1;
    j["C_D2"] = r.C_D2;
    j["b_0"] = r.b_0;
    j["a_0"] = r.a_0;
    j["p_0"] = r.p_0;
    j["C_L"] = r.C_L;
    j["xi_Gamma"] = r.xi_Gamma;
    j["margin_lhs"] = r.margin_lhs;
    j["margin_rhs"] = r.margin_rhs;
    j["margin_ok"] = r.margin_ok;
    j["halvings"] = r.halvings;
    j["geodesic_action"] = r.geodesic_action;
    return j;
}

RunPaths write_run_outputs(const std::string& out_dir, const RunConfig& cfg,
                           const OrbitResult& result, const ManifoldModel& model,
                           const TimeFactor& tf, double wall_seconds) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    RunPaths paths;
    const std::string hash = config_hash(cfg.raw);
    paths.trajectory = out_dir + "/trajectory.csv";
    paths.certificates = out_dir + "/certificates.json";
    paths.summary = out_dir + "/summary.json";
    paths.residuals = out_dir + "/residual_vs_iteration.csv";
    paths.gammas = out_dir + "/gamma_vs_stage.csv";
    paths.windows = out_dir + "/window_growth.csv";
    paths.manifest = out_dir + "/manifest.json";
    paths.checkpoint = out_dir + "/state_final.ofck";

    write_trajectory_csv(paths.trajectory, model, tf, result.state.curve);

    {
        json certs = json::array();
        for (const StageRecord& r : result.state.history) certs.push_back(stage_record_json(r));
        json top;
        top["config_hash"] = hash;
        top["stages"] = certs;
        std::ofstream out(paths.certificates);
        require_stream(out, paths.certificates);
        out << top.dump(2) << '\n';
    }
    {
        json s;
        s["config_hash"] = hash;
        s["seed"] = seed_report_json(result.seed);
        s["h_star"] = result.h_star;
        s["R_lambda"] = result.cp.R_lambda;
        s["lambda"] = result.cp.lambda;
        s["nu"] = result.cp.nu;
        s["K_max"] = result.cp.scan.K_max;
        s["C_g"] = result.cp.scan.C_g;
        s["C_K"] = result.cp.scan.C_K;
        s["C_V"] = result.cp.scan.C_V;
        s["stages_completed"] = result.state.k;
        s["xi_final"] = result.state.xi_k;
        s["gamma_final_measured"] = result.state.gamma_measured;
        s["gamma_final_floor"] = result.state.gamma_floor;
        s["floor_exhausted"] = result.state.floor_exhausted;
        s["I_hat_final"] = result.state.I_hat_k;
        s["stopped_on_tolerance"] = result.stopped_on_tolerance;
        s["stop_reason"] = result.stop_reason;
        s["convergence_sum_69"] = result.convergence_sum_69;
        s["convergence_sum_ok"] = result.convergence_sum_ok;
        s["necessary_condition_lhs"] = result.necessary_lhs;
        s["necessary_condition_rhs"] = result.necessary_rhs;
        s["tail_lambda_eff"] = result.tail_lambda_eff;
        std::ofstream out(paths.summary);
        require_stream(out, paths.summary);
        out << s.dump(2) << '\n';
    }
    {
        std::ofstream out(paths.residuals);
        require_stream(out, paths.residuals);
        out << "stage,iter,residual,step_norm,gamma\n";
        for (const StageRecord& r : result.state.history)
            for (const auto& e : r.trace.entries)
                out << r.k << ',' << e.iter << ',' << fmt17(e.residual) << ','
                    << fmt17(e.step_norm) << ',' << fmt17(e.gamma) << '\n';
    }
    {
        std::ofstream out(paths.gammas);
        require_stream(out, paths.gammas);
        out << "stage,gamma_measured,gamma_floor,drift_sum,A_k\n";
        for (const StageRecord& r : result.state.history)
            out << r.k << ',' << fmt17(r.gamma_measured) << ',' << fmt17(r.gamma_floor) << ','
                << fmt17(r.drift_sum) << ',' << fmt17(r.A_k) << '\n';
    }
    {
        std::ofstream out(paths.windows);
        require_stream(out, paths.windows);
        out << "stage,xi_k,eps_k,xi_hat_measured,zeta_k,heuristic\n";
        for (const StageRecord& r : result.state.history)
            out << r.k << ',' << fmt17(r.bounds.xi_next > 0 ? r.bounds.xi_next : r.bounds.xi_k)
                << ',' << fmt17(r.eps_k) << ',' << fmt17(r.bounds.xi_hat_measured) << ','
                << fmt17(r.bounds.zeta_k) << ',' << (r.heuristic ? 1 : 0) << '\n';
    }
    save_checkpoint(paths.checkpoint, result.state, hash);
    {
        json m;
        m["config_hash"] = hash;
        m["format_version"] = 1;
        m["seed"] = cfg.seed;
        m["wall_seconds"] = wall_seconds;
        m["outputs"] = {paths.trajectory, paths.certificates, paths.summary, paths.residuals,
                        paths.gammas, paths.windows, paths.checkpoint};
        std::ofstream out(paths.manifest);
        require_stream(out, paths.manifest);
        out << m.dump(2) << '\n';
    }
    return paths;
}

namespace {
constexpr char kMagic[8] = {'O', 'F', 'C', 'K', '0', '0', '0', '1'};
}

void save_checkpoint(const std::string& path, const ContinuationState& st,
                     const std::string& cfg_hash) {
    std::ofstream out(path, std::ios::binary);
    require_stream(out, path);
    out.write(kMagic, 8);
    auto wi = [&](int64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    auto wd = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    wi(static_cast<int64_t>(cfg_hash.size()));
    out.write(cfg_hash.data(), cfg_hash.size());
    wi(st.k);
    wd(st.xi_k);
    wd(st.xi_hat_k);
    wd(st.gamma_measured);
    wd(st.gamma_floor);
    wd(st.A_k);
    wd(st.drift_sum);
    wd(st.I_hat_k);
    const int n = st.curve.node_count();
    const int dim = n > 0 ? static_cast<int>(st.curve.points[0].size()) : 0;
    wi(n);
    wi(dim);
    for (int i = 0; i < n; ++i) wd(st.curve.grid->nodes[i]);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < dim; ++a) wd(st.curve.points[i][a]);
    for (int a = 0; a < dim; ++a) wd(st.curve.x_minus[a]);
    for (int a = 0; a < dim; ++a) wd(st.curve.x_plus[a]);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open state file " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("state file version mismatch (bad header) in " + path);
    auto ri = [&]() {
        int64_t v;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    auto rd = [&]() {
        double v;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    Checkpoint ck;
    const int64_t hlen = ri();
    ck.cfg_hash.resize(hlen);
    in.read(ck.cfg_hash.data(), hlen);
    ck.k = static_cast<int>(ri());
    ck.xi_k = rd();
    ck.xi_hat_k = rd();
    ck.gamma_measured = rd();
    ck.gamma_floor = rd();
    ck.A_k = rd();
    ck.drift_sum = rd();
    ck.I_hat_k = rd();
    const int n = static_cast<int>(ri());
    const int dim = static_cast<int>(ri());
    ck.nodes.resize(n);
    for (int i = 0; i < n; ++i) ck.nodes[i] = rd();
    ck.points.assign(n, Vec(dim));
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < dim; ++a) ck.points[i][a] = rd();
    ck.x_minus.resize(dim);
    ck.x_plus.resize(dim);
    for (int a = 0; a < dim; ++a) ck.x_minus[a] = rd();
    for (int a = 0; a < dim; ++a) ck.x_plus[a] = rd();
    if (!in) throw std::runtime_error("truncated state file " + path);
    return ck;
}

ContinuationState state_from_checkpoint(const Checkpoint& ck, const TimeFactor& tf) {
    ContinuationState st;
    st.k = ck.k;
    st.xi_k = ck.xi_k;
    st.xi_hat_k = ck.xi_hat_k;
    st.gamma_measured = ck.gamma_measured;
    st.gamma_floor = ck.gamma_floor;
    st.A_k = ck.A_k;
    st.drift_sum = ck.drift_sum;
    st.I_hat_k = ck.I_hat_k;
    auto grid = std::make_shared<WindowGrid>();
    grid->xi_k = ck.xi_k;
    grid->nodes = ck.nodes;
    for (int i = 0; i < grid->node_count(); ++i)
        if (grid->nodes[i] == 0.0) grid->zero_node = i;
    // rebuild cell data from the factor
    const int nc = grid->node_count() - 1;
    grid->cell_mid.resize(nc);
    grid->cell_h.resize(nc);
    grid->r_mid.resize(nc);
    grid->sigma_mid.resize(nc);
    grid->cell_int_r.resize(nc);
    grid->cell_int_rinv.resize(nc);
    for (int c = 0; c < nc; ++c) {
        const double a = grid->nodes[c], b = grid->nodes[c + 1];
        grid->cell_h[c] = b - a;
        grid->cell_mid[c] = 0.5 * (a + b);
        grid->r_mid[c] = tf.r(grid->cell_mid[c]);
        grid->sigma_mid[c] = tf.sigma(grid->cell_mid[c]);
        const WeightIntegrals wi = tf.weight_integrals(a, b);
        grid->cell_int_r[c] = wi.int_r;
        grid->cell_int_rinv[c] = wi.int_r_inv;
    }
    st.curve.grid = grid;
    st.curve.points = ck.points;
    st.curve.x_minus = ck.x_minus;
    st.curve.x_plus = ck.x_plus;
    return st;
}

}  // namespace runio
}  // namespace orbitforge
