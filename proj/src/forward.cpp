#include "gwinfer/forward.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>

namespace gwinfer::forward {

namespace {
double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }
} // namespace

SourceSpec SourceSpec::stages(double x, double y, std::vector<double> rates) {
    SourceSpec s;
    s.x = x;
    s.y = y;
    s.stage_rates = std::move(rates);
    return s;
}

SourceSpec SourceSpec::pulse(double x, double y, double rate, double t_on, double t_off) {
    SourceSpec s;
    s.x = x;
    s.y = y;
    s.rate = rate;
    s.t_on = t_on;
    s.t_off = t_off;
    return s;
}

void SourceSpec::validate(const GridSpec& grid) const {
    require(x >= 0.0 && x <= grid.length_x && y >= 0.0 && y <= grid.length_y, "invalid-config",
            "source location outside the domain");
    if (!stage_rates.empty()) {
        require(stage_rates.size() == 6, "invalid-config", "stage schedule needs six rates");
        for (double r : stage_rates)
            require(r >= 0.0, "invalid-config", "source rates must be >= 0");
    } else {
        require(rate >= 0.0, "invalid-config", "source rate must be >= 0");
        require(t_on < t_off, "invalid-config", "source needs t_on < t_off");
    }
}

double SourceSpec::rate_at(double t) const {
    if (!stage_rates.empty()) {
        // stage i (1-based) is active on [i, i+1)
        if (t < 1.0 || t >= 7.0) return 0.0;
        const int stage = static_cast<int>(std::floor(t - 1.0));
        return stage_rates[static_cast<std::size_t>(std::min(stage, 5))];
    }
    return (t >= t_on && t < t_off) ? rate : 0.0;
}

std::vector<double> SourceSpec::breakpoints() const {
    if (!stage_rates.empty()) return {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
    return {t_on, t_off};
}

void ObservationPlan::validate(const GridSpec& grid, double end_time) const {
    auto check_well = [&](const Well& w) {
        require(w.x >= 0.0 && w.x <= grid.length_x && w.y >= 0.0 && w.y <= grid.length_y,
                "invalid-config", "well outside the domain");
    };
    for (const Well& w : head_wells) check_well(w);
    for (const Well& w : conc_wells) check_well(w);
    for (double t : conc_times)
        require(t >= 0.0 && t <= end_time, "invalid-config",
                "observation time outside the simulation horizon");
}

Eigen::VectorXd solve_steady_flow(const FieldRealization& field, const FlowConfig& cfg) {
    cfg.validate();
    const GridSpec& g = field.grid;
    g.validate();
    require(field.values.size() == g.n_nodes(), "dimension-mismatch",
            "field does not match grid");

    const int n = g.n_nodes();
    const double dx = g.dx(), dy = g.dy();
    Eigen::VectorXd k = field.values.array().exp();

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(5 * n));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);

    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const int c = g.node(i, j);
            double diag = 0.0;

            // west
            if (i > 0) {
                const double t = harmonic(k[c], k[g.node(i - 1, j)]) * dy / dx;
                diag += t;
                trips.emplace_back(c, g.node(i - 1, j), -t);
            } else {
                const double t = k[c] * dy / (0.5 * dx);
                diag += t;
                rhs[c] += t * cfg.left_head;
            }
            // east
            if (i < g.nx - 1) {
                const double t = harmonic(k[c], k[g.node(i + 1, j)]) * dy / dx;
                diag += t;
                trips.emplace_back(c, g.node(i + 1, j), -t);
            } else {
                const double t = k[c] * dy / (0.5 * dx);
                diag += t;
                rhs[c] += t * cfg.right_head;
            }
            // south/north: no-flow, no terms
            if (j > 0) {
                const double t = harmonic(k[c], k[g.node(i, j - 1)]) * dx / dy;
                diag += t;
                trips.emplace_back(c, g.node(i, j - 1), -t);
            }
            if (j < g.ny - 1) {
                const double t = harmonic(k[c], k[g.node(i, j + 1)]) * dx / dy;
                diag += t;
                trips.emplace_back(c, g.node(i, j + 1), -t);
            }
            trips.emplace_back(c, c, diag);
        }
    }

    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
    if (solver.info() != Eigen::Success) fail("solver-failed", "flow matrix factorization failed");
    Eigen::VectorXd h = solver.solve(rhs);
    if (solver.info() != Eigen::Success) fail("solver-failed", "flow solve failed");

    const double resid = (a * h - rhs).cwiseAbs().maxCoeff();
    const double scale = rhs.cwiseAbs().maxCoeff();
    require(resid <= 1e-8 * std::max(scale, 1.0), "solver-failed",
            "flow residual above tolerance");
    return h;
}

VelocityField darcy_velocity(const Eigen::VectorXd& heads, const FieldRealization& field,
                             const FlowConfig& cfg) {
    cfg.validate();
    require(cfg.porosity > 0.0, "invalid-config", "porosity must be > 0");
    const GridSpec& g = field.grid;
    require(heads.size() == g.n_nodes(), "dimension-mismatch", "heads do not match grid");

    const double dx = g.dx(), dy = g.dy(), theta = cfg.porosity;
    Eigen::VectorXd k = field.values.array().exp();

    VelocityField v;
    v.grid = g;
    v.vx = Eigen::VectorXd::Zero((g.nx + 1) * g.ny);
    v.vy = Eigen::VectorXd::Zero(g.nx * (g.ny + 1));

    for (int j = 0; j < g.ny; ++j) {
        // boundary faces use the half-cell gradient with the cell's own K
        v.vx[v.xface(0, j)] =
            -(k[g.node(0, j)] / theta) * (heads[g.node(0, j)] - cfg.left_head) / (0.5 * dx);
        v.vx[v.xface(g.nx, j)] = -(k[g.node(g.nx - 1, j)] / theta) *
                                 (cfg.right_head - heads[g.node(g.nx - 1, j)]) / (0.5 * dx);
        for (int i = 1; i < g.nx; ++i) {
            const double kf = harmonic(k[g.node(i - 1, j)], k[g.node(i, j)]);
            v.vx[v.xface(i, j)] =
                -(kf / theta) * (heads[g.node(i, j)] - heads[g.node(i - 1, j)]) / dx;
        }
    }
    // top/bottom y-faces stay zero (no-flow)
    for (int j = 1; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const double kf = harmonic(k[g.node(i, j - 1)], k[g.node(i, j)]);
            v.vy[v.yface(i, j)] =
                -(kf / theta) * (heads[g.node(i, j)] - heads[g.node(i, j - 1)]) / dy;
        }
    }
    return v;
}

DispersionTensor dispersion_tensor(double v1, double v2, double alpha_l, double alpha_t) {
    const double mag = std::sqrt(v1 * v1 + v2 * v2);
    if (mag <= 0.0) {
        const double d = alpha_t * 1e-12;
        return {d, d, 0.0};
    }
    return {(alpha_l * v1 * v1 + alpha_t * v2 * v2) / mag,
            (alpha_l * v2 * v2 + alpha_t * v1 * v1) / mag, (alpha_l - alpha_t) * v1 * v2 / mag};
}

TransportSnapshots solve_transport(const VelocityField& velocity, const SourceSpec& source,
                                   const TransportConfig& tcfg, const FlowConfig& cfg,
                                   const std::vector<double>& snapshot_times) {
    tcfg.validate();
    cfg.validate();
    const GridSpec& g = velocity.grid;
    source.validate(g);
    for (double t : snapshot_times)
        require(t >= 0.0 && t <= tcfg.end_time, "invalid-config",
                "snapshot time outside [0, end_time]");

    const int nx = g.nx, ny = g.ny;
    const double dx = g.dx(), dy = g.dy(), theta = cfg.porosity;
    const double cell_vol = dx * dy;

    // Face dispersion tensors are steady; precompute them together with the
    // per-cell stability bound.
    std::vector<DispersionTensor> dfx(static_cast<std::size_t>((nx + 1) * ny));
    std::vector<DispersionTensor> dfy(static_cast<std::size_t>(nx * (ny + 1)));
    auto vy_at_xface = [&](int i, int j) {
        // average the y-face velocities of the cells adjacent to x-face (i,j)
        double sum = 0.0;
        int cnt = 0;
        for (int ci : {i - 1, i}) {
            if (ci < 0 || ci >= nx) continue;
            sum += velocity.vy[velocity.yface(ci, j)] + velocity.vy[velocity.yface(ci, j + 1)];
            cnt += 2;
        }
        return cnt > 0 ? sum / cnt : 0.0;
    };
    auto vx_at_yface = [&](int i, int j) {
        double sum = 0.0;
        int cnt = 0;
        for (int cj : {j - 1, j}) {
            if (cj < 0 || cj >= ny) continue;
            sum += velocity.vx[velocity.xface(i, cj)] + velocity.vx[velocity.xface(i + 1, cj)];
            cnt += 2;
        }
        return cnt > 0 ? sum / cnt : 0.0;
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i <= nx; ++i)
            dfx[static_cast<std::size_t>(velocity.xface(i, j))] = dispersion_tensor(
                velocity.vx[velocity.xface(i, j)], vy_at_xface(i, j), tcfg.alpha_l, tcfg.alpha_t);
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i < nx; ++i)
            dfy[static_cast<std::size_t>(velocity.yface(i, j))] = dispersion_tensor(
                vx_at_yface(i, j), velocity.vy[velocity.yface(i, j)], tcfg.alpha_l, tcfg.alpha_t);

    double rate_bound = 0.0;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const double ax = std::max(std::abs(velocity.vx[velocity.xface(i, j)]),
                                       std::abs(velocity.vx[velocity.xface(i + 1, j)]));
            const double ay = std::max(std::abs(velocity.vy[velocity.yface(i, j)]),
                                       std::abs(velocity.vy[velocity.yface(i, j + 1)]));
            const auto& dw = dfx[static_cast<std::size_t>(velocity.xface(i, j))];
            const auto& de = dfx[static_cast<std::size_t>(velocity.xface(i + 1, j))];
            const auto& ds = dfy[static_cast<std::size_t>(velocity.yface(i, j))];
            const auto& dn = dfy[static_cast<std::size_t>(velocity.yface(i, j + 1))];
            const double d11 = std::max(dw.d11, de.d11);
            const double d22 = std::max(ds.d22, dn.d22);
            const double d12 = std::max(std::max(std::abs(dw.d12), std::abs(de.d12)),
                                        std::max(std::abs(ds.d12), std::abs(dn.d12)));
            rate_bound = std::max(rate_bound, ax / dx + ay / dy + 2.0 * d11 / (dx * dx) +
                                                  2.0 * d22 / (dy * dy) +
                                                  2.0 * d12 / (dx * dy));
        }
    }
    double dt_stable = rate_bound > 0.0 ? tcfg.cfl_safety / rate_bound : tcfg.end_time;
    if (tcfg.max_dt > 0.0) dt_stable = std::min(dt_stable, tcfg.max_dt);

    // Event times the stepper must land on exactly.
    std::vector<double> events = snapshot_times;
    for (double b : source.breakpoints())
        if (b > 0.0 && b < tcfg.end_time) events.push_back(b);
    events.push_back(tcfg.end_time);
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 events.end());

    const int src_i = g.cell_index_x(source.x);
    const int src_j = g.cell_index_y(source.y);
    const int src_cell = g.node(src_i, src_j);

    Eigen::VectorXd c = Eigen::VectorXd::Zero(g.n_nodes());

    TransportSnapshots out;
    out.times = snapshot_times;
    out.concentrations.resize(snapshot_times.size());

    auto record_snapshots = [&](double t) {
        for (std::size_t s = 0; s < snapshot_times.size(); ++s)
            if (std::abs(snapshot_times[s] - t) < 1e-12) out.concentrations[s] = c;
    };
    record_snapshots(0.0);

    // Net face flux into each cell [mass/time] for the given state; returns
    // the net advective outflow through the left/right boundaries.
    Eigen::VectorXd flux_net(g.n_nodes());
    auto eval_fluxes = [&](const Eigen::VectorXd& u) {
        flux_net.setZero();
        double boundary_out = 0.0;

        // dC/dy at an x-face: averaged central difference with zero-gradient
        // ghosts at the top/bottom rows
        auto dcdy_xface = [&](int i, int j) {
            double sum = 0.0;
            int cnt = 0;
            for (int ci : {i - 1, i}) {
                if (ci < 0 || ci >= nx) continue;
                const double up = j + 1 < ny ? u[g.node(ci, j + 1)] : u[g.node(ci, j)];
                const double dn = j - 1 >= 0 ? u[g.node(ci, j - 1)] : u[g.node(ci, j)];
                sum += (up - dn) / (2.0 * dy);
                ++cnt;
            }
            return cnt > 0 ? sum / cnt : 0.0;
        };
        auto dcdx_yface = [&](int i, int j) {
            double sum = 0.0;
            int cnt = 0;
            for (int cj : {j - 1, j}) {
                if (cj < 0 || cj >= ny) continue;
                const double rt = i + 1 < nx ? u[g.node(i + 1, cj)] : u[g.node(i, cj)];
                const double lf = i - 1 >= 0 ? u[g.node(i - 1, cj)] : u[g.node(i, cj)];
                sum += (rt - lf) / (2.0 * dx);
                ++cnt;
            }
            return cnt > 0 ? sum / cnt : 0.0;
        };

        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i <= nx; ++i) {
                const double vf = velocity.vx[velocity.xface(i, j)];
                double flux; // in +x direction, mass per time
                if (i == 0) {
                    flux = theta * dy * vf * (vf >= 0.0 ? 0.0 : u[g.node(0, j)]);
                } else if (i == nx) {
                    flux = theta * dy * vf * (vf >= 0.0 ? u[g.node(nx - 1, j)] : 0.0);
                } else {
                    const double cup = vf >= 0.0 ? u[g.node(i - 1, j)] : u[g.node(i, j)];
                    const auto& d = dfx[static_cast<std::size_t>(velocity.xface(i, j))];
                    const double grad_x = (u[g.node(i, j)] - u[g.node(i - 1, j)]) / dx;
                    const double cross = d.d12 != 0.0 ? d.d12 * dcdy_xface(i, j) : 0.0;
                    flux = theta * dy * (vf * cup - d.d11 * grad_x - cross);
                }
                if (i > 0) flux_net[g.node(i - 1, j)] -= flux;
                if (i < nx) flux_net[g.node(i, j)] += flux;
                if (i == 0) boundary_out += -flux;
                if (i == nx) boundary_out += flux;
            }
        }
        // y-faces: boundary faces carry no flux (no-flow), interior only
        for (int j = 1; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                const double vf = velocity.vy[velocity.yface(i, j)];
                const double cup = vf >= 0.0 ? u[g.node(i, j - 1)] : u[g.node(i, j)];
                const auto& d = dfy[static_cast<std::size_t>(velocity.yface(i, j))];
                const double grad_y = (u[g.node(i, j)] - u[g.node(i, j - 1)]) / dy;
                const double cross = d.d12 != 0.0 ? d.d12 * dcdx_yface(i, j) : 0.0;
                const double flux = theta * dx * (vf * cup - d.d22 * grad_y - cross);
                flux_net[g.node(i, j - 1)] -= flux;
                flux_net[g.node(i, j)] += flux;
            }
        }
        return boundary_out;
    };

    double t = 0.0;
    std::size_t next_event = 0;
    while (next_event < events.size() && events[next_event] <= 1e-12) ++next_event;

    Eigen::VectorXd stage(g.n_nodes());
    const double inv_vol = 1.0 / (theta * cell_vol);
    while (t < tcfg.end_time - 1e-12) {
        if (++out.steps > tcfg.max_steps)
            fail("step-limit-exceeded", "transport exceeded the configured step cap");
        double dt = dt_stable;
        if (next_event < events.size()) dt = std::min(dt, events[next_event] - t);

        // Heun (SSP-RK2): positivity-preserving at the Euler CFL, second order
        // in time so the stability-bound step size does not distort fronts.
        // The source rate is constant across the step (steps never straddle
        // schedule breakpoints).
        const double src_rate = source.rate_at(t);
        const double bnd0 = eval_fluxes(c);
        stage = c + (dt * inv_vol) * flux_net;
        stage[src_cell] += dt * src_rate * inv_vol;
        const double bnd1 = eval_fluxes(stage);
        c = 0.5 * (c + stage + (dt * inv_vol) * flux_net);
        c[src_cell] += 0.5 * dt * src_rate * inv_vol;

        out.injected_mass += dt * src_rate;
        out.outflux_mass += 0.5 * dt * (bnd0 + bnd1);

        t += dt;
        if (next_event < events.size() && std::abs(t - events[next_event]) < 1e-12) {
            t = events[next_event];
            ++next_event;
        }
        record_snapshots(t);
    }

    for (std::size_t s = 0; s < snapshot_times.size(); ++s)
        require(out.concentrations[s].size() == g.n_nodes(), "missing-snapshot",
                "snapshot time was not reached exactly");
    out.stored_mass = theta * cell_vol * c.sum();
    return out;
}

Eigen::VectorXd observe(const Eigen::VectorXd& heads, const TransportSnapshots& snapshots,
                        const ObservationPlan& plan, const GridSpec& grid) {
    Eigen::VectorXd y(plan.size());
    int k = 0;
    for (const Well& w : plan.head_wells) {
        require(heads.size() == grid.n_nodes(), "dimension-mismatch", "heads do not match grid");
        y[k++] = heads[grid.node(grid.cell_index_x(w.x), grid.cell_index_y(w.y))];
    }
    for (const Well& w : plan.conc_wells) {
        const int cell = grid.node(grid.cell_index_x(w.x), grid.cell_index_y(w.y));
        for (double t : plan.conc_times) {
            int found = -1;
            for (std::size_t s = 0; s < snapshots.times.size(); ++s)
                if (std::abs(snapshots.times[s] - t) < 1e-9) found = static_cast<int>(s);
            require(found >= 0, "missing-snapshot", "requested time was not simulated");
            y[k++] = snapshots.concentrations[static_cast<std::size_t>(found)][cell];
        }
    }
    return y;
}

VgmClosures vgm_closures(double s_w, const VgmParams& p) {
    p.validate();
    require(s_w >= p.s_wr - 1e-12 && s_w <= 1.0 - p.s_gr + 1e-12, "saturation-out-of-range",
            "need s_wr <= s_w <= 1 - s_gr");
    const double s_e =
        std::clamp((s_w - p.s_wr) / (1.0 - p.s_wr - p.s_gr), 0.0, 1.0);

    VgmClosures out;
    out.s_e = s_e;
    if (s_e <= 0.0) {
        out.p_c = std::numeric_limits<double>::infinity();
        out.k_rw = 0.0;
        out.k_rg = 1.0;
        return out;
    }
    const double se_pow = std::pow(s_e, 1.0 / p.m); // S_e^(1/m)
    out.p_c = s_e >= 1.0 ? 0.0 : p.p_e * std::pow(std::pow(s_e, -1.0 / p.m) - 1.0, 1.0 - p.m);
    const double bracket = 1.0 - std::pow(1.0 - se_pow, p.m);
    out.k_rw = std::pow(s_e, p.l) * bracket * bracket;
    out.k_rg = std::pow(1.0 - s_e, p.gamma) * std::pow(1.0 - se_pow, 2.0 * p.m);
    return out;
}

} // namespace gwinfer::forward
