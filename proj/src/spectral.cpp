#include "qtflow/spectral.hpp"

#include <cmath>

#include "qtflow/operators.hpp"

namespace qtflow {

AxisBasis periodic_axis_basis(int n, double h) {
    // Real trigonometric eigenbasis of the periodic second difference,
    // orthonormal under the uniform weight h (so sum_j h phi phi' = delta).
    AxisBasis b;
    b.n = n;
    b.phi.assign(static_cast<std::size_t>(n) * n, 0.0);
    b.eig.assign(n, 0.0);
    const double L = n * h;
    int col = 0;
    auto set_col = [&](int k, bool sine, double norm) {
        for (int j = 0; j < n; ++j) {
            const double arg = 2.0 * M_PI * k * j / n;
            b.phi[static_cast<std::size_t>(col) * n + j] =
                norm * (sine ? std::sin(arg) : std::cos(arg));
        }
        b.eig[col] = periodic_mode_eigenvalue(k, n, h, L);
        ++col;
    };
    set_col(0, false, std::sqrt(1.0 / (n * h)));
    const double norm2 = std::sqrt(2.0 / (n * h));
    for (int k = 1; 2 * k < n; ++k) {
        set_col(k, false, norm2);
        set_col(k, true, norm2);
    }
    if (n % 2 == 0) set_col(n / 2, false, std::sqrt(1.0 / (n * h)));
    return b;
}

AxisBasis reflected_axis_basis(int n4, double h4) {
    // cos(pi m j h4) are exact eigenvectors of the reflected second
    // difference; they are orthogonal under the trapezoid weights.
    AxisBasis b;
    b.n = n4;
    b.phi.assign(static_cast<std::size_t>(n4) * n4, 0.0);
    b.eig.assign(n4, 0.0);
    const int N = n4 - 1;
    for (int m = 0; m <= N; ++m) {
        const double norm = (m == 0 || m == N) ? 1.0 : std::sqrt(2.0);
        for (int j = 0; j <= N; ++j)
            b.phi[static_cast<std::size_t>(m) * n4 + j] = norm * std::cos(M_PI * m * j / N);
        b.eig[m] = reflected_mode_eigenvalue(m, n4, h4);
    }
    return b;
}

namespace {

// y <- op applied along one axis of the 4D array; op is the n x n matrix
// with columns as stored (transpose=false applies phi, true applies phi^T).
void apply_axis(const std::vector<double>& in, std::vector<double>& out, int n_before,
                int n_axis, int n_after, const std::vector<double>& phi, bool transpose,
                std::vector<double>& work) {
    work.assign(static_cast<std::size_t>(n_axis), 0.0);
    const std::size_t axis_stride = static_cast<std::size_t>(n_after);
    for (int b = 0; b < n_before; ++b) {
        const std::size_t base_b = static_cast<std::size_t>(b) * n_axis * n_after;
        for (int a = 0; a < n_after; ++a) {
            const std::size_t base = base_b + a;
            for (int k = 0; k < n_axis; ++k) {
                double acc = 0.0;
                if (transpose) {
                    const double* col = phi.data() + static_cast<std::size_t>(k) * n_axis;
                    for (int j = 0; j < n_axis; ++j) acc += col[j] * in[base + j * axis_stride];
                } else {
                    for (int j = 0; j < n_axis; ++j)
                        acc += phi[static_cast<std::size_t>(j) * n_axis + k] *
                               in[base + j * axis_stride];
                }
                work[k] = acc;
            }
            for (int k = 0; k < n_axis; ++k) out[base + k * axis_stride] = work[k];
        }
    }
}

}  // namespace

ModalTransform::ModalTransform(const Grid& g) : grid_(g) {
    basis_[0] = periodic_axis_basis(g.n1, g.h1);
    basis_[1] = periodic_axis_basis(g.n2, g.h2);
    basis_[2] = periodic_axis_basis(g.n3, g.h3);
    basis_[3] = reflected_axis_basis(g.n4, g.h4);
    p43_symbol_.resize(g.volume_points());
    std::size_t idx = 0;
    for (int k1 = 0; k1 < g.n1; ++k1)
        for (int k2 = 0; k2 < g.n2; ++k2)
            for (int k3 = 0; k3 < g.n3; ++k3)
                for (int m = 0; m < g.n4; ++m) {
                    const double lam = basis_[0].eig[k1] + basis_[1].eig[k2] +
                                       basis_[2].eig[k3] + basis_[3].eig[m];
                    p43_symbol_[idx++] = lam * lam;
                }
}

void ModalTransform::forward(const std::vector<double>& u, std::vector<double>& coeffs) const {
    coeffs = u;
    std::vector<double> tmp(u.size());
    const Grid& g = grid_;
    const int nb[4] = {1, g.n1, g.n1 * g.n2, g.n1 * g.n2 * g.n3};
    const int na[4] = {g.n2 * g.n3 * g.n4, g.n3 * g.n4, g.n4, 1};
    const int ns[4] = {g.n1, g.n2, g.n3, g.n4};
    for (int axis = 0; axis < 4; ++axis) {
        apply_axis(coeffs, tmp, nb[axis], ns[axis], na[axis], basis_[axis].phi, true, scratch_);
        coeffs.swap(tmp);
    }
}

void ModalTransform::inverse(const std::vector<double>& coeffs, std::vector<double>& u) const {
    u = coeffs;
    std::vector<double> tmp(coeffs.size());
    const Grid& g = grid_;
    const int nb[4] = {1, g.n1, g.n1 * g.n2, g.n1 * g.n2 * g.n3};
    const int na[4] = {g.n2 * g.n3 * g.n4, g.n3 * g.n4, g.n4, 1};
    const int ns[4] = {g.n1, g.n2, g.n3, g.n4};
    for (int axis = 0; axis < 4; ++axis) {
        apply_axis(u, tmp, nb[axis], ns[axis], na[axis], basis_[axis].phi, false, scratch_);
        u.swap(tmp);
    }
}

ModalTransformPtr make_modal_transform(const Grid& g) {
    return std::make_shared<const ModalTransform>(g);
}

}  // namespace qtflow
