#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "gwinfer/fields.hpp"

namespace gwinfer::forward {

using fields::FieldRealization;
using fields::GridSpec;

/// Steady saturated flow: prescribed heads left/right, no-flow top/bottom.
struct FlowConfig {
    double left_head = 12.0;
    double right_head = 11.0;
    double porosity = 0.25;

    void validate() const {
        require(std::isfinite(left_head) && std::isfinite(right_head), "invalid-config",
                "boundary heads must be finite");
        require(porosity > 0.0 && porosity < 1.0, "invalid-config", "porosity must be in (0,1)");
    }
};

/// Point source: either six piecewise rates s_1..s_6 active on t in [i, i+1)
/// or a single rate S_s on [t_on, t_off).
struct SourceSpec {
    double x = 0.0;
    double y = 0.0;
    std::vector<double> stage_rates; // six rates, stage i active on [i+1, i+2)
    double rate = 0.0;               // S_s, used when stage_rates is empty
    double t_on = 0.0;
    double t_off = 0.0;

    static SourceSpec stages(double x, double y, std::vector<double> rates);
    static SourceSpec pulse(double x, double y, double rate, double t_on, double t_off);

    void validate(const GridSpec& grid) const;
    double rate_at(double t) const;
    /// Times where the rate changes; steps never straddle these.
    std::vector<double> breakpoints() const;
};

struct TransportConfig {
    double alpha_l = 0.3;
    double alpha_t = 0.03;
    double end_time = 14.0;
    double cfl_safety = 0.9;
    double max_dt = 0.0; // 0 = no cap beyond stability
    long max_steps = 2'000'000;

    void validate() const {
        require(alpha_l >= alpha_t && alpha_t > 0.0, "invalid-config",
                "dispersivities need alpha_l >= alpha_t > 0");
        require(end_time > 0.0, "invalid-config", "end_time must be > 0");
        require(cfl_safety > 0.0 && cfl_safety <= 1.0, "invalid-config",
                "cfl_safety must be in (0,1]");
    }
};

struct Well {
    double x = 0.0;
    double y = 0.0;
};

/// Which wells and instants feed the measurement vector. Ordering is fixed:
/// heads by well index first, then concentrations well-major, time ascending
/// within each well.
struct ObservationPlan {
    std::vector<Well> head_wells;
    std::vector<Well> conc_wells;
    std::vector<double> conc_times;

    int size() const {
        return static_cast<int>(head_wells.size() +
                                conc_wells.size() * conc_times.size());
    }
    void validate(const GridSpec& grid, double end_time) const;
};

/// Face-centered pore-water velocities: vx on (nx+1) x ny x-faces,
/// vy on nx x (ny+1) y-faces, both row-major like the grid.
struct VelocityField {
    GridSpec grid;
    Eigen::VectorXd vx;
    Eigen::VectorXd vy;

    int xface(int i, int j) const { return j * (grid.nx + 1) + i; }
    int yface(int i, int j) const { return j * grid.nx + i; }
};

struct TransportSnapshots {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> concentrations; // per node, row-major
    double injected_mass = 0.0;
    double outflux_mass = 0.0;
    double stored_mass = 0.0; // at end_time
    long steps = 0;
};

Eigen::VectorXd solve_steady_flow(const FieldRealization& field, const FlowConfig& cfg);

VelocityField darcy_velocity(const Eigen::VectorXd& heads, const FieldRealization& field,
                             const FlowConfig& cfg);

/// Dispersion tensor components (D11, D22, D12) for one velocity pair.
/// Zero velocity falls back to D = alpha_t * 1e-12 * I.
struct DispersionTensor {
    double d11;
    double d22;
    double d12;
};
DispersionTensor dispersion_tensor(double v1, double v2, double alpha_l, double alpha_t);

TransportSnapshots solve_transport(const VelocityField& velocity, const SourceSpec& source,
                                   const TransportConfig& tcfg, const FlowConfig& cfg,
                                   const std::vector<double>& snapshot_times);

Eigen::VectorXd observe(const Eigen::VectorXd& heads, const TransportSnapshots& snapshots,
                        const ObservationPlan& plan, const GridSpec& grid);

/// Van Genuchten-Mualem closures evaluated at one water saturation.
struct VgmParams {
    double p_e = 880.0;
    double m = 0.37;
    double l = 0.50;
    double gamma = 0.33;
    double s_wr = 0.0;
    double s_gr = 0.0;

    void validate() const {
        require(m > 0.0 && m < 1.0, "invalid-config", "VGM shape m must be in (0,1)");
        require(s_wr >= 0.0 && s_gr >= 0.0 && s_wr + s_gr < 1.0, "invalid-config",
                "residual saturations need s_wr,s_gr >= 0 and s_wr + s_gr < 1");
    }
};

struct VgmClosures {
    double s_e;
    double p_c;
    double k_rw;
    double k_rg;
};
VgmClosures vgm_closures(double s_w, const VgmParams& p);

} // namespace gwinfer::forward
