// least_squares.hpp: Levenberg-Marquardt for small dense problems

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace lgr {

struct LeastSquaresOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-8;  // relative parameter step
    double initial_lambda = 1e-3;  // relative to max diag(J^T J)
    double fd_relative_step = 1e-6;
};

struct LeastSquaresResult {
    Eigen::VectorXd params;
    double cost = 0.0;  // 0.5 * |r|^2
    int iterations = 0;
    bool converged = false;
};

// residuals(p, r) fills r; jacobian(p, J) fills dr/dp. An empty jacobian means central differences.
struct LeastSquaresProblem {
    Eigen::Index n_residuals = 0;
    std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> residuals;
    std::function<void(const Eigen::VectorXd&, Eigen::MatrixXd&)> jacobian;
};

namespace detail {
inline void fd_jacobian(const LeastSquaresProblem& prob, const Eigen::VectorXd& p, Eigen::MatrixXd& jac, double rel) {
    Eigen::VectorXd rp(prob.n_residuals), rm(prob.n_residuals);
    jac.resize(prob.n_residuals, p.size());
    Eigen::VectorXd q = p;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double h = rel * std::max(std::abs(p[k]), 1e-3);
        q[k] = p[k] + h;
        prob.residuals(q, rp);
        q[k] = p[k] - h;
        prob.residuals(q, rm);
        q[k] = p[k];
        jac.col(k) = (rp - rm) / (2.0 * h);
    }
}
}  // namespace detail

inline LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& prob, Eigen::VectorXd p,
                                              const LeastSquaresOptions& opt = {}) {
    Eigen::VectorXd r(prob.n_residuals), r_trial(prob.n_residuals);
    Eigen::MatrixXd jac;
    prob.residuals(p, r);
    double cost = 0.5 * r.squaredNorm();
    double lambda = -1.0;
    LeastSquaresResult out;

    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (prob.jacobian)
            prob.jacobian(p, jac);
        else
            detail::fd_jacobian(prob, p, jac, opt.fd_relative_step);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;
        // Marquardt scaling keeps the iteration invariant under residual rescaling
        Eigen::VectorXd scale = jtj.diagonal().cwiseMax(1e-300);
        if (lambda < 0.0) lambda = opt.initial_lambda;

        bool accepted = false;
        Eigen::VectorXd step;
        for (int inner = 0; inner < 60; ++inner) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * scale;
            step = a.ldlt().solve(-jtr);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd trial = p + step;
            prob.residuals(trial, r_trial);
            const double trial_cost = 0.5 * r_trial.squaredNorm();
            if (std::isfinite(trial_cost) && trial_cost <= cost) {
                p = trial;
                r.swap(r_trial);
                cost = trial_cost;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        const double rel_step = accepted ? step.norm() / (p.norm() + opt.step_tolerance) : 0.0;
        if (!accepted || rel_step < opt.step_tolerance || cost == 0.0) {
            // a rejected step with a huge lambda means we sit at a minimum to machine precision
            out.converged = true;
            ++it;
            break;
        }
    }
    out.params = p;
    out.cost = cost;
    out.iterations = it;
    return out;
}

}  // namespace lgr
