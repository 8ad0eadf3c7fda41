#include "qtflow/grid.hpp"

namespace qtflow {

Grid build_grid(int n1, int n2, int n3, int n4, double L1, double L2, double L3) {
    auto too_small = [](const char* axis, int n, int min) {
        return std::invalid_argument(std::string("grid dimension too small: ") + axis + " = " +
                                     std::to_string(n) + " < " + std::to_string(min));
    };
    if (n1 < 4) throw too_small("n1", n1, 4);
    if (n2 < 4) throw too_small("n2", n2, 4);
    if (n3 < 4) throw too_small("n3", n3, 4);
    if (n4 < 5) throw too_small("n4", n4, 5);
    if (!(L1 > 0.0) || !(L2 > 0.0) || !(L3 > 0.0))
        throw std::invalid_argument("grid side lengths must be positive");

    Grid g;
    g.n1 = n1; g.n2 = n2; g.n3 = n3; g.n4 = n4;
    g.L1 = L1; g.L2 = L2; g.L3 = L3;
    g.h1 = L1 / n1;
    g.h2 = L2 / n2;
    g.h3 = L3 / n3;
    g.h4 = 1.0 / (n4 - 1);
    return g;
}

}  // namespace qtflow
