#pragma once

#include <functional>
#include <vector>

#include "qtflow/grid.hpp"

namespace qtflow {

// Real-valued function on the volume grid, one value per point in grid order.
struct ScalarField {
    Grid grid;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(const Grid& g, double fill = 0.0)
        : grid(g), values(g.volume_points(), fill) {}

    double& operator()(int i1, int i2, int i3, int i4) {
        return values[grid.index(i1, i2, i3, i4)];
    }
    double operator()(int i1, int i2, int i3, int i4) const {
        return values[grid.index(i1, i2, i3, i4)];
    }

    static ScalarField constant(const Grid& g, double c) { return ScalarField(g, c); }

    // Samples f(x1,x2,x3,x4) at the grid points.
    static ScalarField sample(const Grid& g,
                              const std::function<double(double, double, double, double)>& f);
};

enum class Face : unsigned char { lower = 0, upper = 1, both = 2 };

// Function on the boundary 3-tori.  For face==both the lower slab (x4=0)
// comes first, then the upper slab, each in face-index order.
struct BoundaryField {
    Grid grid;
    Face face = Face::both;
    std::vector<double> values;

    BoundaryField() = default;
    explicit BoundaryField(const Grid& g, Face f = Face::both, double fill = 0.0)
        : grid(g), face(f),
          values((f == Face::both ? 2 : 1) * g.face_points(), fill) {}

    std::size_t slab_offset(Face which) const;
    double& at(Face which, int i1, int i2, int i3) {
        return values[slab_offset(which) + grid.face_index(i1, i2, i3)];
    }
    double at(Face which, int i1, int i2, int i3) const {
        return values[slab_offset(which) + grid.face_index(i1, i2, i3)];
    }

    static BoundaryField constant(const Grid& g, Face f, double c) {
        return BoundaryField(g, f, c);
    }
    // Samples f(x1,x2,x3) on each covered face.
    static BoundaryField sample(const Grid& g, Face f,
                                const std::function<double(double, double, double)>& fn);
};

// Restriction of a volume field to the boundary slabs.
BoundaryField boundary_trace(const ScalarField& u);

double max_abs(const std::vector<double>& v);
bool all_finite(const std::vector<double>& v);

void require_same_grid(const Grid& a, const Grid& b, const char* what);

}  // namespace qtflow
