// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layoutsplat/scene.hpp"

#include <vector>

namespace layoutsplat {

/// Weights of the total objective. Defaults are the reference coefficients.
struct LossWeights {
    double instance_sds = 1.0;  // beta1
    double layout = 1e3;        // beta2
    double refine = 1e-1;       // beta3
    double global = 1e-1;       // beta4
    double regularizer = 1e3;   // beta5

    void validate() const;
};

/// Unweighted term values for one evaluation of the objective.
struct LossReport {
    std::vector<double> sds_instance;
    std::vector<double> layout;
    std::vector<double> refine;
    double global = 0.0;
    double reg = 0.0;
    /// Weighted total, filled by total_loss.
    double total = 0.0;
    double eta = 0.0;
};

/// Sum over Gaussians of the exterior L1 distance from each local center to
/// the layout box. Interior points contribute nothing.
double layout_loss(const InstanceGaussians &g, const InstanceLayout &layout);

/// Value plus gradient with respect to local positions, scaled by `weight`.
double layout_loss(const InstanceGaussians &g, const InstanceLayout &layout,
                   InstanceGradients &grad, double weight);

/// Weighted total. Throws DivergenceError if any term is NaN.
double total_loss(const LossReport &report, const LossWeights &w);

} // namespace layoutsplat
