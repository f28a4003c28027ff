#ifndef ABSORBKIT_REHO_HPP
#define ABSORBKIT_REHO_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "absorbkit/common.hpp"
#include "absorbkit/data_model.hpp"

namespace absorbkit {

/// 4D fMRI segment: X*Y*Z voxels by T time points, x-fastest layout
/// (index = x + nx*(y + ny*(z + nz*t)), the order of a flat NIfTI dump).
struct Volume4D {
    int nx = 0, ny = 0, nz = 0, nt = 0;
    std::array<double, 3> voxel_size_mm = {1.0, 1.0, 1.0};
    std::vector<double> data;          // nx*ny*nz*nt
    std::vector<std::uint8_t> mask;    // nx*ny*nz, 1 = in brain

    std::size_t voxel_index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(nx) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * z);
    }
    double at(int x, int y, int z, int t) const {
        return data[voxel_index(x, y, z) +
                    static_cast<std::size_t>(nx) * ny * nz * static_cast<std::size_t>(t)];
    }
    double& at(int x, int y, int z, int t) {
        return data[voxel_index(x, y, z) +
                    static_cast<std::size_t>(nx) * ny * nz * static_cast<std::size_t>(t)];
    }
    void validate() const;
};

/// Scalar 3D map sharing Volume4D's spatial layout.
struct Volume3D {
    int nx = 0, ny = 0, nz = 0;
    std::vector<double> values;  // nx*ny*nz, x-fastest

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(nx) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * z);
    }
    double at(int x, int y, int z) const { return values[index(x, y, z)]; }
    double& at(int x, int y, int z) { return values[index(x, y, z)]; }
};

struct LabelVolume {
    int nx = 0, ny = 0, nz = 0;
    std::vector<int> labels;  // 0 = background, 1..498 = roi_id

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(nx) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * z);
    }
};

/// Kendall's coefficient of concordance over the rows of `block`
/// (m series of length T), with the standard tie correction:
///   W = 12*S / (m^2*(T^3 - T) - m*C_ties), clamped to [0, 1].
/// Throws ConstantAllSeries when every row is constant (W undefined).
double kendalls_w(const Eigen::Ref<const Matrix>& block);

struct RehoMapResult {
    Volume3D map;                 // W per in-mask voxel, 0 outside the mask
    long constant_voxel_count = 0;  // voxels whose whole neighborhood was constant
};

/// ReHo map: per in-mask voxel, Kendall's W over the voxel and its in-mask
/// stencil neighbors. cluster selects the stencil: 7 (faces), 19 (faces +
/// edges) or 27 (full cube). Neighborhoods shrink at mask boundaries; a
/// voxel whose shrunk neighborhood has fewer than 2 series is an error.
/// All-constant neighborhoods map to 0 and are counted, not fatal.
RehoMapResult reho_map(const Volume4D& v, int cluster);

/// Z-score the in-mask values (population standard deviation). Out-of-mask
/// voxels stay 0. Throws ZeroVariance when the in-mask variance is 0.
Volume3D standardize_map(const Volume3D& m, const std::vector<std::uint8_t>& mask);

/// Mask-normalized separable Gaussian smoothing. sigma_mm = fwhm /
/// (2*sqrt(2*ln 2)); per-axis sigma in voxels; kernel truncated at 3*sigma
/// and renormalized to unit sum. Both map*mask and mask are convolved and
/// divided, so edge voxels are not dragged toward 0.
Volume3D smooth_gaussian(const Volume3D& m, const std::vector<std::uint8_t>& mask,
                         double fwhm_mm, const std::array<double, 3>& voxel_size_mm);

struct ParcellationResult {
    Vector values;                  // length registry.size(); NaN where missing
    std::vector<int> missing_roi_ids;
};

/// Mean map value over the in-mask voxels of each ROI. An ROI with no
/// in-mask voxels throws EmptyRoi unless allow_missing, in which case its
/// entry is NaN and its id is listed in missing_roi_ids.
ParcellationResult parcellate(const Volume3D& m, const std::vector<std::uint8_t>& mask,
                              const LabelVolume& labels, const RoiRegistry& registry,
                              bool allow_missing = false);

struct VolumeBundle {
    Volume4D volume;
    LabelVolume labels;
};

/// Load a segment from its JSON sidecar: {"dims": [X,Y,Z,T],
/// "voxel_size_mm": [dx,dy,dz], "data_path": ..., "mask_path": ...,
/// "labels_path": ...}. data_path defaults to the sidecar path with a .bin
/// extension; a missing mask_path means all voxels in-mask. Relative paths
/// resolve against the sidecar's directory. Binary formats: data real64,
/// mask uint8, labels int32, all little-endian, x-fastest.
VolumeBundle load_volume_bundle(const std::string& sidecar_path);

struct RehoFeatureResult {
    ParcellationResult parcels;
    long constant_voxel_count = 0;
};

/// Full chain: reho_map -> standardize -> smooth -> parcellate.
RehoFeatureResult compute_reho_features(const VolumeBundle& bundle, const RoiRegistry& registry,
                                        int cluster, double fwhm_mm, bool allow_missing = false);

}  // namespace absorbkit

#endif
