#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qtflow {

// Structured product grid on T^3 x [0,1].  The first three axes are periodic
// with side lengths L1..L3; the fourth axis spans [0,1] inclusive of both
// boundary faces.  Point ordering is row-major over (x1,x2,x3,x4) with x4
// fastest, so each x4 column is contiguous and the two boundary points sit at
// the ends of its column.
struct Grid {
    int n1 = 0, n2 = 0, n3 = 0, n4 = 0;
    double L1 = 1.0, L2 = 1.0, L3 = 1.0;
    double h1 = 0.0, h2 = 0.0, h3 = 0.0, h4 = 0.0;

    std::size_t volume_points() const {
        return static_cast<std::size_t>(n1) * n2 * n3 * n4;
    }
    std::size_t face_points() const {
        return static_cast<std::size_t>(n1) * n2 * n3;
    }

    std::size_t index(int i1, int i2, int i3, int i4) const {
        return ((static_cast<std::size_t>(i1) * n2 + i2) * n3 + i3) * n4 + i4;
    }
    std::size_t face_index(int i1, int i2, int i3) const {
        return (static_cast<std::size_t>(i1) * n2 + i2) * n3 + i3;
    }

    double x1(int i) const { return i * h1; }
    double x2(int i) const { return i * h2; }
    double x3(int i) const { return i * h3; }
    double x4(int i) const { return i * h4; }

    bool operator==(const Grid&) const = default;
};

// Throws std::invalid_argument naming the offending axis when the dimension
// minima (n1..n3 >= 4, n4 >= 5) or positivity constraints are violated.
Grid build_grid(int n1, int n2, int n3, int n4, double L1, double L2, double L3);

}  // namespace qtflow
