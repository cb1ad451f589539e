// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/losses.hpp"

#include "layoutsplat/errors.hpp"

#include <cmath>

namespace layoutsplat {

void LossWeights::validate() const {
    for (const double b : {instance_sds, layout, refine, global, regularizer}) {
        if (!std::isfinite(b) || b < 0.0) {
            throw ValidationError("loss weights must be finite and >= 0");
        }
    }
}

double layout_loss(const InstanceGaussians &g, const InstanceLayout &layout) {
    InstanceGradients unused(g.size());
    return layout_loss(g, layout, unused, 0.0);
}

double layout_loss(const InstanceGaussians &g, const InstanceLayout &layout,
                   InstanceGradients &grad, double weight) {
    const Vec3 half = layout.half_extents();
    double total = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const Vec3 &p = g.positions[j];
        for (int a = 0; a < 3; ++a) {
            const double excess = std::abs(p[a]) - half[a];
            if (excess > 0.0) {
                total += excess;
                if (weight != 0.0) {
                    grad.positions[j][a] += weight * (p[a] > 0.0 ? 1.0 : -1.0);
                }
            }
        }
    }
    return total;
}

double total_loss(const LossReport &r, const LossWeights &w) {
    double sum = 0.0;
    auto add = [&](double beta, double term) {
        if (std::isnan(term)) {
            throw DivergenceError("loss term is NaN");
        }
        sum += beta * term;
    };
    for (const double v : r.sds_instance) {
        add(w.instance_sds, v);
    }
    for (const double v : r.layout) {
        add(w.layout, v);
    }
    for (const double v : r.refine) {
        add(w.refine, v);
    }
    add(w.global, r.global);
    add(w.regularizer, r.reg);
    return sum;
}

} // namespace layoutsplat
