#include "qtflow/field.hpp"

#include <cmath>
#include <stdexcept>

namespace qtflow {

ScalarField ScalarField::sample(const Grid& g,
                                const std::function<double(double, double, double, double)>& f) {
    ScalarField out(g);
    std::size_t idx = 0;
    for (int i1 = 0; i1 < g.n1; ++i1)
        for (int i2 = 0; i2 < g.n2; ++i2)
            for (int i3 = 0; i3 < g.n3; ++i3)
                for (int i4 = 0; i4 < g.n4; ++i4)
                    out.values[idx++] = f(g.x1(i1), g.x2(i2), g.x3(i3), g.x4(i4));
    return out;
}

std::size_t BoundaryField::slab_offset(Face which) const {
    if (face == Face::both)
        return which == Face::upper ? grid.face_points() : 0;
    if (which != face)
        throw std::logic_error("boundary field does not cover the requested face");
    return 0;
}

BoundaryField BoundaryField::sample(const Grid& g, Face f,
                                    const std::function<double(double, double, double)>& fn) {
    BoundaryField out(g, f);
    const std::size_t slabs = f == Face::both ? 2 : 1;
    for (std::size_t s = 0; s < slabs; ++s) {
        std::size_t idx = s * g.face_points();
        for (int i1 = 0; i1 < g.n1; ++i1)
            for (int i2 = 0; i2 < g.n2; ++i2)
                for (int i3 = 0; i3 < g.n3; ++i3)
                    out.values[idx++] = fn(g.x1(i1), g.x2(i2), g.x3(i3));
    }
    return out;
}

BoundaryField boundary_trace(const ScalarField& u) {
    const Grid& g = u.grid;
    BoundaryField out(g, Face::both);
    for (int i1 = 0; i1 < g.n1; ++i1)
        for (int i2 = 0; i2 < g.n2; ++i2)
            for (int i3 = 0; i3 < g.n3; ++i3) {
                out.at(Face::lower, i1, i2, i3) = u(i1, i2, i3, 0);
                out.at(Face::upper, i1, i2, i3) = u(i1, i2, i3, g.n4 - 1);
            }
    return out;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
    if (!(a == b))
        throw std::invalid_argument(std::string("grid mismatch in ") + what);
}

}  // namespace qtflow
