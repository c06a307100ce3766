#pragma once

#include <Eigen/Core>
#include <deque>
#include <functional>

namespace gwinfer::optim {

/// Objective returning the value and filling the gradient.
using ObjectiveFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct LbfgsOptions {
    int max_iterations = 200;
    int history = 8;
    double grad_tolerance = 1e-7;
    double step_tolerance = 1e-12;
    double armijo_c = 1e-4;
    int max_line_search = 40;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Objective values at accepted iterates, strictly decreasing.
    std::vector<double> trajectory;
};

/// Limited-memory BFGS with Armijo backtracking. Accepted steps strictly
/// decrease the objective; the search stops when no decrease is found.
inline LbfgsResult lbfgs_minimize(const ObjectiveFn& f, Eigen::VectorXd x0,
                                  const LbfgsOptions& opt = {}) {
    LbfgsResult res;
    const Eigen::Index n = x0.size();
    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd g(n);
    double fx = f(x, g);
    res.trajectory.push_back(fx);

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;

    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        if (g.norm() <= opt.grad_tolerance * std::max(1.0, x.norm())) {
            res.converged = true;
            break;
        }
        // two-loop recursion
        Eigen::VectorXd q = g;
        std::vector<double> alpha(s_hist.size());
        for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
            alpha[static_cast<std::size_t>(k)] =
                rho_hist[static_cast<std::size_t>(k)] *
                s_hist[static_cast<std::size_t>(k)].dot(q);
            q -= alpha[static_cast<std::size_t>(k)] * y_hist[static_cast<std::size_t>(k)];
        }
        if (!s_hist.empty()) {
            const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double beta = rho_hist[k] * y_hist[k].dot(q);
            q += (alpha[k] - beta) * s_hist[k];
        }
        Eigen::VectorXd dir = -q;
        double slope = g.dot(dir);
        if (slope >= 0.0) { // fall back to steepest descent
            dir = -g;
            slope = g.dot(dir);
        }

        double step = 1.0;
        double fnew = fx;
        Eigen::VectorXd xnew(n), gnew(n);
        bool accepted = false;
        for (int ls = 0; ls < opt.max_line_search; ++ls) {
            xnew = x + step * dir;
            fnew = f(xnew, gnew);
            if (std::isfinite(fnew) && fnew <= fx + opt.armijo_c * step * slope &&
                fnew < fx) {
                accepted = true;
                break;
            }
            step *= 0.5;
            if (step * dir.norm() < opt.step_tolerance) break;
        }
        if (!accepted) break;

        Eigen::VectorXd s = xnew - x;
        Eigen::VectorXd yv = gnew - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opt.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        x = std::move(xnew);
        g = gnew;
        fx = fnew;
        res.trajectory.push_back(fx);
        res.iterations = iter + 1;
    }
    res.x = std::move(x);
    res.value = fx;
    return res;
}

} // namespace gwinfer::optim
