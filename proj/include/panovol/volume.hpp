// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "panovol/camera.hpp"
#include "panovol/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace panovol {

struct GridIndex {
    std::size_t i = 0;  // row, north to south
    std::size_t j = 0;  // column, west to east
    std::size_t k = 0;  // layer, ground up

    friend bool operator==(GridIndex, GridIndex) = default;
};

/// Trilinear footprint of a query point: the 8 surrounding nodes and their
/// interpolation weights. `pinned` marks ground-layer nodes whose value is
/// fixed at the volume's ground density.
struct Stencil {
    std::array<std::size_t, 8> node{};
    std::array<double, 8> weight{};
    std::array<bool, 8> pinned{};
};

/// Explicit non-negative density grid over a WorldFrame.
///
/// Horizontal nodes sit at the centers of an nx x ny partition of the
/// footprint (pixel centers when it matches the satellite image size);
/// layer k sits at height k * max_height / (nz - 1). Queries between the
/// outermost horizontal nodes and the footprint edge clamp to the edge
/// nodes. Layer 0 always reads back as `ground_density`, whatever is
/// stored, so the stored array can be optimized uniformly.
class DensityVolume {
  public:
    static constexpr double kDefaultGroundDensity = 1e3;

    DensityVolume() : DensityVolume(WorldFrame{}, 256, 256, 65) {}

    DensityVolume(const WorldFrame &frame, std::size_t nx, std::size_t ny, std::size_t nz, double fill = 0.0,
                  double ground_density = kDefaultGroundDensity)
        : frame_(frame), nx_(nx), ny_(ny), nz_(nz), ground_density_(ground_density) {
        frame_.validate();
        if (nx == 0 || ny == 0 || nz < 2) {
            throw DomainError("density volume: resolution must be at least 1x1x2, got " + std::to_string(nx) +
                              "x" + std::to_string(ny) + "x" + std::to_string(nz));
        }
        if (!(fill >= 0.0) || !std::isfinite(fill) || !(ground_density >= 0.0) || !std::isfinite(ground_density)) {
            throw DomainError("density volume: densities must be finite and non-negative");
        }
        grid_.assign(nx * ny * nz, fill);
        update_cell_sizes();
    }

    const WorldFrame &frame() const { return frame_; }
    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    std::size_t nz() const { return nz_; }
    std::size_t node_count() const { return grid_.size(); }
    double ground_density() const { return ground_density_; }

    /// Horizontal node spacing along north and east, vertical layer spacing.
    double cell_n() const { return cell_n_; }
    double cell_e() const { return cell_e_; }
    double cell_u() const { return cell_u_; }

    std::size_t flat(std::size_t i, std::size_t j, std::size_t k) const { return (i * ny_ + j) * nz_ + k; }
    std::size_t flat(GridIndex g) const { return flat(g.i, g.j, g.k); }
    GridIndex unflat(std::size_t f) const { return {f / (ny_ * nz_), (f / nz_) % ny_, f % nz_}; }
    bool is_pinned(std::size_t flat_index) const { return flat_index % nz_ == 0; }

    /// Stored value, pinned layer included.
    double stored(std::size_t i, std::size_t j, std::size_t k) const { return grid_[flat(i, j, k)]; }

    /// Effective node value (ground layer reads ground_density).
    double node_value(std::size_t flat_index) const {
        return is_pinned(flat_index) ? ground_density_ : grid_[flat_index];
    }
    double node_value(std::size_t i, std::size_t j, std::size_t k) const { return node_value(flat(i, j, k)); }

    void set(std::size_t i, std::size_t j, std::size_t k, double value) {
        check_density(value);
        grid_[flat(i, j, k)] = value;
    }

    std::span<const double> values() const { return grid_; }

    /// Replaces the whole stored grid (x-major, z fastest).
    void assign(std::span<const double> values) {
        if (values.size() != grid_.size()) {
            throw DomainError("density volume: expected " + std::to_string(grid_.size()) + " values, got " +
                              std::to_string(values.size()));
        }
        for (double v : values) {
            check_density(v);
        }
        grid_.assign(values.begin(), values.end());
    }

    Vec3 node_position(std::size_t i, std::size_t j, std::size_t k) const {
        return {-0.5 * frame_.extent_e + (static_cast<double>(j) + 0.5) * cell_e_,
                0.5 * frame_.extent_n - (static_cast<double>(i) + 0.5) * cell_n_, static_cast<double>(k) * cell_u_};
    }

    /// Fills `st` for a point inside the cube; returns false outside it.
    bool stencil(Vec3 p, Stencil &st) const {
        if (!frame_.contains(p)) {
            return false;
        }
        std::size_t i0, j0, k0, di, dj, dk;
        double ti, tj, tk;
        axis((0.5 * frame_.extent_n - p.n) * inv_cell_n_ - 0.5, nx_, i0, di, ti);
        axis((p.e + 0.5 * frame_.extent_e) * inv_cell_e_ - 0.5, ny_, j0, dj, tj);
        axis(p.u * inv_cell_u_, nz_, k0, dk, tk);
        const std::size_t base = flat(i0, j0, k0);
        const std::size_t si = di * ny_ * nz_;
        const std::size_t sj = dj * nz_;
        const double wi[2] = {1.0 - ti, ti};
        const double wj[2] = {1.0 - tj, tj};
        const double wk[2] = {1.0 - tk, tk};
        const bool pin0 = k0 == 0;
        int c = 0;
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                const std::size_t row = base + static_cast<std::size_t>(a) * si + static_cast<std::size_t>(b) * sj;
                const double wab = wi[a] * wj[b];
                st.node[c] = row;
                st.weight[c] = wab * wk[0];
                st.pinned[c] = pin0;
                ++c;
                st.node[c] = row + dk;
                st.weight[c] = wab * wk[1];
                st.pinned[c] = pin0 && dk == 0;
                ++c;
            }
        }
        return true;
    }

    double evaluate(const Stencil &st) const {
        double s = 0.0;
        for (int c = 0; c < 8; ++c) {
            s += st.weight[c] * (st.pinned[c] ? ground_density_ : grid_[st.node[c]]);
        }
        return s;
    }

  private:
    static void check_density(double v) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw DomainError("density volume: value " + std::to_string(v) + " is negative or non-finite");
        }
    }

    // Lower node index, step to the upper node (0 or 1) and blend factor.
    static void axis(double f, std::size_t count, std::size_t &lo, std::size_t &step, double &t) {
        if (count == 1) {
            lo = 0;
            step = 0;
            t = 0.0;
            return;
        }
        const double top = static_cast<double>(count - 1);
        f = std::clamp(f, 0.0, top);
        double base = std::floor(f);
        if (base >= top) {
            base = top - 1.0;
        }
        lo = static_cast<std::size_t>(base);
        step = 1;
        t = f - base;
    }

    void update_cell_sizes() {
        cell_n_ = frame_.extent_n / static_cast<double>(nx_);
        cell_e_ = frame_.extent_e / static_cast<double>(ny_);
        cell_u_ = frame_.max_height / static_cast<double>(nz_ - 1);
        inv_cell_n_ = 1.0 / cell_n_;
        inv_cell_e_ = 1.0 / cell_e_;
        inv_cell_u_ = 1.0 / cell_u_;
    }

    WorldFrame frame_;
    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    std::size_t nz_ = 0;
    double ground_density_ = kDefaultGroundDensity;
    double cell_n_ = 0.0;
    double cell_e_ = 0.0;
    double cell_u_ = 0.0;
    double inv_cell_n_ = 0.0;
    double inv_cell_e_ = 0.0;
    double inv_cell_u_ = 0.0;
    std::vector<double> grid_;
};

/// Density at a world point: 0 outside the cube, trilinear inside.
inline double sample_density(const DensityVolume &vol, Vec3 p) {
    if (!is_finite(p)) {
        throw DomainError("sample_density: non-finite query point");
    }
    Stencil st;
    if (!vol.stencil(p, st)) {
        return 0.0;
    }
    return vol.evaluate(st);
}

struct NodeWeight {
    GridIndex node;
    std::size_t flat = 0;
    double weight = 0.0;  // trilinear weight; the 8 weights sum to 1
    bool pinned = false;

    /// d sample_density / d stored value. Pinned nodes are not read from
    /// storage, so their derivative is zero.
    double derivative() const { return pinned ? 0.0 : weight; }
};

/// Nonzero trilinear weights at `p`; empty outside the cube.
inline std::vector<NodeWeight> sample_density_gradient(const DensityVolume &vol, Vec3 p) {
    if (!is_finite(p)) {
        throw DomainError("sample_density_gradient: non-finite query point");
    }
    std::vector<NodeWeight> out;
    Stencil st;
    if (!vol.stencil(p, st)) {
        return out;
    }
    for (int c = 0; c < 8; ++c) {
        if (st.weight[c] != 0.0) {
            out.push_back({vol.unflat(st.node[c]), st.node[c], st.weight[c], st.pinned[c]});
        }
    }
    return out;
}

} // namespace panovol
