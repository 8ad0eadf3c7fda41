#include "qtflow/solvers.hpp"

#include <cmath>
#include <memory>

#include "qtflow/detail/dense1d.hpp"
#include "qtflow/rng.hpp"
#include "qtflow/spectral.hpp"

namespace qtflow {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double nrm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

SolveReport conjugate_gradient_raw(const VecApply& apply, const std::vector<double>& rhs,
                                   std::vector<double>& x, double tol, int max_iter,
                                   const VecApply& precond) {
    SolveReport rep;
    const std::size_t n = rhs.size();
    if (x.size() != n) x.assign(n, 0.0);

    std::vector<double> r(n), z(n), p(n), ap(n);
    apply(x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - ap[i];

    const double bnorm = nrm2(rhs);
    const double stop = tol * (bnorm > 0.0 ? bnorm : 1.0);

    auto record_state = [&](double rn) {
        rep.residual_history.push_back(bnorm > 0.0 ? rn / bnorm : rn);
        rep.energy_history.push_back(-0.5 * (dot(x, rhs) + dot(x, r)));
    };

    double rnorm = nrm2(r);
    record_state(rnorm);
    if (rnorm <= stop) {
        rep.converged = true;
        rep.final_residual = rep.residual_history.back();
        return rep;
    }

    if (precond)
        precond(r, z);
    else
        z = r;
    p = z;
    double rz = dot(r, z);

    for (int it = 0; it < max_iter; ++it) {
        apply(p, ap);
        const double pap = dot(p, ap);
        if (!std::isfinite(pap) || !std::isfinite(rz)) {
            rep.nan_detected = true;
            break;
        }
        if (pap <= 0.0) break;  // lost positive-definiteness; bail out honestly
        const double alpha = rz / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rep.iterations = it + 1;
        rnorm = nrm2(r);
        if (!std::isfinite(rnorm)) {
            rep.nan_detected = true;
            break;
        }
        record_state(rnorm);
        if (rnorm <= stop) {
            rep.converged = true;
            break;
        }
        if (precond)
            precond(r, z);
        else
            z = r;
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    rep.final_residual = rep.residual_history.empty() ? 0.0 : rep.residual_history.back();
    return rep;
}

std::pair<ScalarField, SolveReport> conjugate_gradient(const LinearOperator& op,
                                                       const ScalarField& rhs, double tol,
                                                       int max_iter, const ScalarField& guess) {
    require_same_grid(rhs.grid, guess.grid, "conjugate_gradient");
    ScalarField x = guess;
    ScalarField scratch(rhs.grid);
    VecApply apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        scratch.values = in;
        out = op.apply(scratch).values;
    };
    SolveReport rep = conjugate_gradient_raw(apply, rhs.values, x.values, tol, max_iter);
    return {std::move(x), rep};
}

VecApply jacobi_preconditioner(std::vector<double> diagonal) {
    for (double& d : diagonal) d = 1.0 / d;
    return [diag = std::move(diagonal)](const std::vector<double>& in, std::vector<double>& out) {
        out.resize(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = diag[i] * in[i];
    };
}

namespace {

using detail::cholesky_factor;
using detail::cholesky_solve;
using detail::reflected_second_difference_matrix;
using detail::trapezoid_weights;

// 1D pieces of the interior biharmonic operator for one tangential mode:
// D = (S - rho I) with S the reflected second difference on n4 points, then
// A_K = E' W4 D D E over the interior indices (no tangential weight factor;
// the caller's transform convention absorbs it).
struct InteriorModal {
    Grid grid;
    std::array<AxisBasis, 3> tangential;
    // Cholesky factors per tangential mode, (n4-2) x (n4-2), row-major lower.
    std::vector<std::vector<double>> chol;

    explicit InteriorModal(const Grid& g);
    void solve_inplace(std::vector<double>& field) const;
};

InteriorModal::InteriorModal(const Grid& g) : grid(g) {
    tangential[0] = periodic_axis_basis(g.n1, g.h1);
    tangential[1] = periodic_axis_basis(g.n2, g.h2);
    tangential[2] = periodic_axis_basis(g.n3, g.h3);

    const int n4 = g.n4;
    const int ni = n4 - 2;
    std::vector<double> s = reflected_second_difference_matrix(n4, g.h4);
    std::vector<double> w4 = trapezoid_weights(n4, g.h4);

    chol.resize(static_cast<std::size_t>(g.n1) * g.n2 * g.n3);
    std::vector<double> d(static_cast<std::size_t>(n4) * n4);
    std::vector<double> dd(static_cast<std::size_t>(n4) * n4);
    std::vector<double> a(static_cast<std::size_t>(ni) * ni);
    for (int k1 = 0; k1 < g.n1; ++k1)
        for (int k2 = 0; k2 < g.n2; ++k2)
            for (int k3 = 0; k3 < g.n3; ++k3) {
                const double rho = tangential[0].eig[k1] + tangential[1].eig[k2] +
                                   tangential[2].eig[k3];
                for (int i = 0; i < n4 * n4; ++i) d[i] = s[i];
                for (int i = 0; i < n4; ++i) d[static_cast<std::size_t>(i) * n4 + i] -= rho;
                // dd = W4 D D
                for (int i = 0; i < n4; ++i)
                    for (int j = 0; j < n4; ++j) {
                        double v = 0.0;
                        for (int k = 0; k < n4; ++k)
                            v += d[static_cast<std::size_t>(i) * n4 + k] *
                                 d[static_cast<std::size_t>(k) * n4 + j];
                        dd[static_cast<std::size_t>(i) * n4 + j] = w4[i] * v;
                    }
                for (int i = 0; i < ni; ++i)
                    for (int j = 0; j < ni; ++j)
                        a[static_cast<std::size_t>(i) * ni + j] =
                            dd[static_cast<std::size_t>(i + 1) * n4 + (j + 1)];
                if (!cholesky_factor(a, ni))
                    throw std::runtime_error("interior modal factorization failed");
                chol[(static_cast<std::size_t>(k1) * g.n2 + k2) * g.n3 + k3] = a;
            }
}

void apply_axis_matrix(std::vector<double>& data, const Grid& g, int axis,
                       const std::vector<double>& phi, bool transpose) {
    const int ns[3] = {g.n1, g.n2, g.n3};
    const int n = ns[axis];
    const std::size_t n_after = axis == 0 ? static_cast<std::size_t>(g.n2) * g.n3 * g.n4
                                          : (axis == 1 ? static_cast<std::size_t>(g.n3) * g.n4
                                                       : static_cast<std::size_t>(g.n4));
    const std::size_t n_before = data.size() / (n * n_after);
    std::vector<double> work(n);
    for (std::size_t b = 0; b < n_before; ++b)
        for (std::size_t a = 0; a < n_after; ++a) {
            const std::size_t base = b * n * n_after + a;
            for (int k = 0; k < n; ++k) {
                double acc = 0.0;
                if (transpose) {
                    const double* col = phi.data() + static_cast<std::size_t>(k) * n;
                    for (int j = 0; j < n; ++j) acc += col[j] * data[base + j * n_after];
                } else {
                    for (int j = 0; j < n; ++j)
                        acc += phi[static_cast<std::size_t>(j) * n + k] * data[base + j * n_after];
                }
                work[k] = acc;
            }
            for (int k = 0; k < n; ++k) data[base + k * n_after] = work[k];
        }
}

void InteriorModal::solve_inplace(std::vector<double>& field) const {
    const Grid& g = grid;
    for (int a = 0; a < 3; ++a) apply_axis_matrix(field, g, a, tangential[a].phi, true);
    const int n4 = g.n4;
    const int ni = n4 - 2;
    std::vector<double> y(ni);
    std::size_t col = 0;
    for (int k1 = 0; k1 < g.n1; ++k1)
        for (int k2 = 0; k2 < g.n2; ++k2)
            for (int k3 = 0; k3 < g.n3; ++k3, ++col) {
                double* c = field.data() + col * n4;
                for (int j = 0; j < ni; ++j) y[j] = c[j + 1];
                cholesky_solve(chol[col], ni, y.data());
                c[0] = 0.0;
                c[n4 - 1] = 0.0;
                for (int j = 0; j < ni; ++j) c[j + 1] = y[j];
            }
    for (int a = 0; a < 3; ++a) apply_axis_matrix(field, g, a, tangential[a].phi, false);
}

void zero_faces(std::vector<double>& v, const Grid& g) {
    const int N = g.n4 - 1;
    for (int i1 = 0; i1 < g.n1; ++i1)
        for (int i2 = 0; i2 < g.n2; ++i2)
            for (int i3 = 0; i3 < g.n3; ++i3) {
                const std::size_t c = g.index(i1, i2, i3, 0);
                v[c] = 0.0;
                v[c + N] = 0.0;
            }
}

// Weighted interior P4 application: in (faces zero, or boundary data) ->
// w_q * P4(in) with face rows zeroed.
void apply_interior_operator(const ScalarField& in, const BackgroundGeometry& geo,
                             std::vector<double>& out) {
    ScalarField p4 = paneitz_p4(in, geo, BoundaryConditionSet::both());
    const auto& w = geo.quad_volume_weight();
    out.resize(p4.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p4.values[i] * w[i];
    zero_faces(out, geo.grid());
}

}  // namespace

std::pair<ScalarField, SolveReport> solve_constrained_biharmonic(
    const BoundaryField& dirichlet, const BackgroundGeometry& geo, double tol, int max_iter,
    const ScalarField* warm_start) {
    require_same_grid(dirichlet.grid, geo.grid(), "solve_constrained_biharmonic");
    if (dirichlet.face != Face::both)
        throw std::invalid_argument("extension needs boundary data on both faces");
    if (!all_finite(dirichlet.values))
        throw std::invalid_argument("extension boundary data must be finite");
    const Grid& g = geo.grid();

    // Lift: boundary values on the faces, zero inside.
    ScalarField lift(g);
    const int N = g.n4 - 1;
    for (int i1 = 0; i1 < g.n1; ++i1)
        for (int i2 = 0; i2 < g.n2; ++i2)
            for (int i3 = 0; i3 < g.n3; ++i3) {
                const std::size_t c = g.index(i1, i2, i3, 0);
                lift.values[c] = dirichlet.at(Face::lower, i1, i2, i3);
                lift.values[c + N] = dirichlet.at(Face::upper, i1, i2, i3);
            }

    std::vector<double> rhs;
    apply_interior_operator(lift, geo, rhs);
    for (double& x : rhs) x = -x;

    // Interior CG, modal (flat-exact) preconditioner.
    static thread_local std::unique_ptr<InteriorModal> modal_cache;
    if (!modal_cache || !(modal_cache->grid == g)) modal_cache = std::make_unique<InteriorModal>(g);
    const InteriorModal* modal = modal_cache.get();

    ScalarField scratch(g);
    VecApply apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        scratch.values = in;
        zero_faces(scratch.values, g);
        apply_interior_operator(scratch, geo, out);
    };
    VecApply precond = [modal, &g](const std::vector<double>& in, std::vector<double>& out) {
        out = in;
        zero_faces(out, g);
        modal->solve_inplace(out);
    };

    std::vector<double> y(g.volume_points(), 0.0);
    if (warm_start && warm_start->grid == g) {
        y = warm_start->values;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] -= lift.values[i];
        zero_faces(y, g);
    }
    SolveReport rep = conjugate_gradient_raw(apply, rhs, y, tol, max_iter, precond);

    ScalarField w(g);
    for (std::size_t i = 0; i < y.size(); ++i) w.values[i] = y[i] + lift.values[i];
    return {std::move(w), rep};
}

double interior_p4_residual(const ScalarField& w, const BackgroundGeometry& geo) {
    ScalarField p4 = paneitz_p4(w, geo, BoundaryConditionSet::both());
    const Grid& g = geo.grid();
    const auto& wq = geo.quad_volume_weight();
    double s = 0.0;
    for (int i1 = 0; i1 < g.n1; ++i1)
        for (int i2 = 0; i2 < g.n2; ++i2)
            for (int i3 = 0; i3 < g.n3; ++i3)
                for (int i4 = 1; i4 < g.n4 - 1; ++i4) {
                    const std::size_t i = g.index(i1, i2, i3, i4);
                    s += p4.values[i] * p4.values[i] * wq[i];
                }
    return std::sqrt(s);
}

LanczosResult lanczos_extremes(const LinearOperator& op, const BackgroundGeometry& geo,
                               int iterations, unsigned long long seed,
                               bool deflate_constants) {
    const Grid& g = geo.grid();
    const auto& w = geo.quad_volume_weight();
    const std::size_t n = g.volume_points();

    auto m_dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i] * w[i];
        return s;
    };

    SplitMix64 rng(seed);
    std::vector<std::vector<double>> basis;
    std::vector<double> alpha, beta;

    std::vector<double> v(n);
    for (auto& x : v) x = rng.symmetric();
    std::vector<double> ones(n, 1.0);
    const double ones_m2 = m_dot(ones, ones);
    if (deflate_constants) {
        const double c = m_dot(v, ones) / ones_m2;
        for (std::size_t i = 0; i < n; ++i) v[i] -= c;
    }
    double nv = std::sqrt(m_dot(v, v));
    for (auto& x : v) x /= nv;

    ScalarField field(g);
    for (int it = 0; it < iterations; ++it) {
        basis.push_back(v);
        field.values = v;
        std::vector<double> av = op.apply(field).values;
        const double a = m_dot(v, av);
        alpha.push_back(a);
        // full reorthogonalization keeps the Ritz extremes trustworthy
        for (const auto& q : basis) {
            const double c = m_dot(av, q);
            for (std::size_t i = 0; i < n; ++i) av[i] -= c * q[i];
        }
        for (const auto& q : basis) {
            const double c = m_dot(av, q);
            for (std::size_t i = 0; i < n; ++i) av[i] -= c * q[i];
        }
        if (deflate_constants) {
            const double c = m_dot(av, ones) / ones_m2;
            for (std::size_t i = 0; i < n; ++i) av[i] -= c;
        }
        const double b = std::sqrt(m_dot(av, av));
        if (it + 1 < iterations) {
            if (b < 1e-300) break;
            beta.push_back(b);
            for (std::size_t i = 0; i < n; ++i) av[i] /= b;
            v = av;
        }
    }

    // Eigenvalues of the tridiagonal via Sturm bisection.
    const int k = static_cast<int>(alpha.size());
    auto count_below = [&](double x) {
        int count = 0;
        double d = alpha[0] - x;
        if (d < 0.0) ++count;
        for (int i = 1; i < k; ++i) {
            const double b2 = beta[i - 1] * beta[i - 1];
            d = alpha[i] - x - b2 / (d == 0.0 ? 1e-300 : d);
            if (d < 0.0) ++count;
        }
        return count;
    };
    double lo = alpha[0], hi = alpha[0];
    for (int i = 0; i < k; ++i) {
        double r = (i > 0 ? std::abs(beta[i - 1]) : 0.0) + (i < k - 1 ? std::abs(beta[i]) : 0.0);
        lo = std::min(lo, alpha[i] - r);
        hi = std::max(hi, alpha[i] + r);
    }
    auto bisect = [&](int target) {
        double a = lo, b = hi;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (a + b);
            if (count_below(mid) >= target + 1)
                b = mid;
            else
                a = mid;
        }
        return 0.5 * (a + b);
    };

    LanczosResult res;
    res.iterations = k;
    res.min_ritz = bisect(0);
    res.max_ritz = bisect(k - 1);
    return res;
}

}  // namespace qtflow
