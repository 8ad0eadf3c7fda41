#pragma once

#include <memory>
#include <vector>

#include "qtflow/background.hpp"

namespace qtflow {

// Modal machinery for the flat background.  The periodic axes are
// diagonalized by the real trigonometric basis, the x4 axis by the cosine
// eigenbasis of the reflected 1D Laplacian, which is orthonormal under the
// trapezoid weights.  Tensor products of these bases diagonalize the flat
// P^{4,3} operator exactly; the flows use that as a preconditioner and the
// extension solver as an essentially direct method.
struct AxisBasis {
    int n = 0;
    std::vector<double> phi;  // n*n, column k = eigenvector, phi[k*n + j]
    std::vector<double> eig;  // Laplacian eigenvalue per column (>= 0 sign convention)
};

AxisBasis periodic_axis_basis(int n, double h);
AxisBasis reflected_axis_basis(int n4, double h4);

// Plain transpose-basis / basis application along all four axes.  With the
// bases above, forward(u) yields the coefficients of u in the dV0-orthonormal
// eigenbasis (the transform itself carries no quadrature weights).
class ModalTransform {
public:
    explicit ModalTransform(const Grid& g);

    void forward(const std::vector<double>& u, std::vector<double>& coeffs) const;
    void inverse(const std::vector<double>& coeffs, std::vector<double>& u) const;

    // (lam1+lam2+lam3+mu)^2 per coefficient: the flat P^{4,3} symbol.
    const std::vector<double>& p43_symbol() const { return p43_symbol_; }

    const Grid& grid() const { return grid_; }

private:
    Grid grid_;
    std::array<AxisBasis, 4> basis_;
    std::vector<double> p43_symbol_;
    mutable std::vector<double> scratch_;
};

// Shared handle; flows build it once per geometry.
using ModalTransformPtr = std::shared_ptr<const ModalTransform>;
ModalTransformPtr make_modal_transform(const Grid& g);

}  // namespace qtflow
