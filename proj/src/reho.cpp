#include "absorbkit/reho.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace absorbkit {

void Volume4D::validate() const {
    if (nx < 1 || ny < 1 || nz < 1) throw DataError("BadVolume", "spatial dims must be >= 1");
    if (nt < 2) throw DataError("BadVolume", "need at least 2 time points for ReHo");
    const std::size_t nvox = static_cast<std::size_t>(nx) * ny * nz;
    if (data.size() != nvox * static_cast<std::size_t>(nt)) {
        throw DataError("BadVolume", "data length does not match dims");
    }
    if (mask.size() != nvox) throw DataError("BadVolume", "mask length does not match dims");
    bool any = false;
    for (std::uint8_t m : mask) any = any || (m != 0);
    if (!any) throw DataError("BadVolume", "mask is empty");
    for (double d : voxel_size_mm) {
        if (!(d > 0.0)) throw DataError("BadVolume", "voxel size must be positive");
    }
}

namespace {

// Average ranks of one series, ties sharing the mean rank, plus the tie
// correction term sum(t^3 - t) over tie groups.
void rank_series(const double* x, Eigen::Index t_len, std::vector<int>& order,
                 std::vector<double>& ranks, double& tie_term) {
    order.resize(static_cast<std::size_t>(t_len));
    for (Eigen::Index i = 0; i < t_len; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
    ranks.resize(static_cast<std::size_t>(t_len));
    tie_term = 0.0;
    std::size_t i = 0;
    const std::size_t n = order.size();
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[static_cast<std::size_t>(order[k])] = avg;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
}

}  // namespace

double kendalls_w(const Eigen::Ref<const Matrix>& block) {
    const Eigen::Index m = block.rows();
    const Eigen::Index t_len = block.cols();
    if (m < 2) throw DataError("TooFewSeries", "Kendall's W needs at least 2 series");
    if (t_len < 2) throw DataError("TooFewTimePoints", "Kendall's W needs at least 2 time points");

    std::vector<double> rank_sum(static_cast<std::size_t>(t_len), 0.0);
    double tie_sum = 0.0;
    std::vector<int> order;
    std::vector<double> ranks;
    std::vector<double> row(static_cast<std::size_t>(t_len));
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index t = 0; t < t_len; ++t) row[static_cast<std::size_t>(t)] = block(i, t);
        double tie_term = 0.0;
        rank_series(row.data(), t_len, order, ranks, tie_term);
        tie_sum += tie_term;
        for (Eigen::Index t = 0; t < t_len; ++t) {
            rank_sum[static_cast<std::size_t>(t)] += ranks[static_cast<std::size_t>(t)];
        }
    }

    const double md = static_cast<double>(m);
    const double td = static_cast<double>(t_len);
    const double denom = md * md * (td * td * td - td) - md * tie_sum;
    if (denom <= 0.0) {
        throw DataError("ConstantAllSeries", "every series is constant; W undefined");
    }
    const double mean_rank_sum = md * (td + 1.0) / 2.0;
    double s = 0.0;
    for (double rs : rank_sum) {
        const double d = rs - mean_rank_sum;
        s += d * d;
    }
    double w = 12.0 * s / denom;
    if (w < 0.0) w = 0.0;
    if (w > 1.0) w = 1.0;
    return w;
}

RehoMapResult reho_map(const Volume4D& v, int cluster) {
    v.validate();
    if (cluster != 7 && cluster != 19 && cluster != 27) {
        throw ConfigError("BadClusterSize", "cluster must be 7, 19 or 27, got " +
                                                std::to_string(cluster));
    }

    std::vector<std::array<int, 3>> stencil;
    for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (cluster == 7 && manhattan > 1) continue;
                if (cluster == 19 && manhattan > 2) continue;
                stencil.push_back({dx, dy, dz});
            }
        }
    }

    RehoMapResult out;
    out.map.nx = v.nx;
    out.map.ny = v.ny;
    out.map.nz = v.nz;
    out.map.values.assign(static_cast<std::size_t>(v.nx) * v.ny * v.nz, 0.0);

    const std::size_t nvox = static_cast<std::size_t>(v.nx) * v.ny * v.nz;
    Matrix block;
    for (int z = 0; z < v.nz; ++z) {
        for (int y = 0; y < v.ny; ++y) {
            for (int x = 0; x < v.nx; ++x) {
                if (!v.mask[v.voxel_index(x, y, z)]) continue;
                std::vector<std::size_t> members;
                for (const auto& d : stencil) {
                    const int ax = x + d[0], ay = y + d[1], az = z + d[2];
                    if (ax < 0 || ay < 0 || az < 0 || ax >= v.nx || ay >= v.ny || az >= v.nz) continue;
                    const std::size_t vi = v.voxel_index(ax, ay, az);
                    if (v.mask[vi]) members.push_back(vi);
                }
                if (members.size() < 2) {
                    throw DataError("TooFewSeries",
                                    "voxel (" + std::to_string(x) + "," + std::to_string(y) + "," +
                                        std::to_string(z) + ") has a neighborhood of size " +
                                        std::to_string(members.size()));
                }
                block.resize(static_cast<Index>(members.size()), v.nt);
                for (std::size_t i = 0; i < members.size(); ++i) {
                    for (int t = 0; t < v.nt; ++t) {
                        block(static_cast<Index>(i), t) =
                            v.data[members[i] + nvox * static_cast<std::size_t>(t)];
                    }
                }
                try {
                    out.map.values[v.voxel_index(x, y, z)] = kendalls_w(block);
                } catch (const DataError& e) {
                    if (e.code() != "ConstantAllSeries") throw;
                    out.constant_voxel_count++;
                }
            }
        }
    }
    return out;
}

Volume3D standardize_map(const Volume3D& m, const std::vector<std::uint8_t>& mask) {
    if (mask.size() != m.values.size()) throw DataError("BadVolume", "mask length mismatch");
    double sum = 0.0;
    long n = 0;
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        if (mask[i]) {
            sum += m.values[i];
            ++n;
        }
    }
    if (n == 0) throw DataError("BadVolume", "mask is empty");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        if (mask[i]) {
            const double d = m.values[i] - mean;
            ss += d * d;
        }
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (sd == 0.0) throw DataError("ZeroVariance", "in-mask map is constant");

    Volume3D out = m;
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        out.values[i] = mask[i] ? (m.values[i] - mean) / sd : 0.0;
    }
    return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma_vox) {
    int radius = static_cast<int>(std::floor(3.0 * sigma_vox));
    if (radius < 0) radius = 0;
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma_vox * sigma_vox));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

// In-place convolution of `vol` along one axis with zero boundary.
void convolve_axis(Volume3D& vol, const std::vector<double>& kernel, int axis) {
    const int radius = static_cast<int>(kernel.size() / 2);
    if (radius == 0) return;
    const int dims[3] = {vol.nx, vol.ny, vol.nz};
    Volume3D tmp = vol;
    for (int z = 0; z < vol.nz; ++z) {
        for (int y = 0; y < vol.ny; ++y) {
            for (int x = 0; x < vol.nx; ++x) {
                double acc = 0.0;
                for (int o = -radius; o <= radius; ++o) {
                    int c[3] = {x, y, z};
                    c[axis] += o;
                    if (c[axis] < 0 || c[axis] >= dims[axis]) continue;
                    acc += kernel[static_cast<std::size_t>(o + radius)] * tmp.at(c[0], c[1], c[2]);
                }
                vol.at(x, y, z) = acc;
            }
        }
    }
}

}  // namespace

Volume3D smooth_gaussian(const Volume3D& m, const std::vector<std::uint8_t>& mask,
                         double fwhm_mm, const std::array<double, 3>& voxel_size_mm) {
    if (!(fwhm_mm > 0.0)) throw ConfigError("BadFwhm", "fwhm must be positive");
    if (mask.size() != m.values.size()) throw DataError("BadVolume", "mask length mismatch");
    const double sigma_mm = fwhm_mm / (2.0 * std::sqrt(2.0 * std::log(2.0)));

    Volume3D num = m;
    Volume3D den;
    den.nx = m.nx;
    den.ny = m.ny;
    den.nz = m.nz;
    den.values.resize(m.values.size());
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        const double w = mask[i] ? 1.0 : 0.0;
        num.values[i] = m.values[i] * w;
        den.values[i] = w;
    }

    for (int axis = 0; axis < 3; ++axis) {
        const auto kernel = gaussian_kernel(sigma_mm / voxel_size_mm[static_cast<std::size_t>(axis)]);
        convolve_axis(num, kernel, axis);
        convolve_axis(den, kernel, axis);
    }

    Volume3D out = m;
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        out.values[i] = (mask[i] && den.values[i] > 0.0) ? num.values[i] / den.values[i] : 0.0;
    }
    return out;
}

ParcellationResult parcellate(const Volume3D& m, const std::vector<std::uint8_t>& mask,
                              const LabelVolume& labels, const RoiRegistry& registry,
                              bool allow_missing) {
    if (labels.nx != m.nx || labels.ny != m.ny || labels.nz != m.nz) {
        throw DataError("BadVolume", "label volume dims do not match map");
    }
    if (mask.size() != m.values.size()) throw DataError("BadVolume", "mask length mismatch");

    std::vector<double> sum(static_cast<std::size_t>(registry.size()), 0.0);
    std::vector<long> count(static_cast<std::size_t>(registry.size()), 0);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        const int label = labels.labels[i];
        if (label == 0) continue;
        if (!registry.contains(label)) {
            throw DataError("UnknownRoiId", "label volume contains roi_id " + std::to_string(label));
        }
        if (!mask[i]) continue;
        sum[static_cast<std::size_t>(label - 1)] += m.values[i];
        count[static_cast<std::size_t>(label - 1)]++;
    }

    ParcellationResult out;
    out.values.resize(registry.size());
    for (int r = 1; r <= registry.size(); ++r) {
        const std::size_t i = static_cast<std::size_t>(r - 1);
        if (count[i] == 0) {
            if (!allow_missing) {
                throw DataError("EmptyRoi", "roi_id " + std::to_string(r) + " has no in-mask voxels");
            }
            out.values[static_cast<Index>(i)] = std::numeric_limits<double>::quiet_NaN();
            out.missing_roi_ids.push_back(r);
        } else {
            out.values[static_cast<Index>(i)] = sum[i] / static_cast<double>(count[i]);
        }
    }
    return out;
}

namespace {

std::string resolve_path(const std::filesystem::path& base_dir, const std::string& p) {
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return fp.string();
    return (base_dir / fp).string();
}

template <typename T>
std::vector<T> read_binary(const std::string& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("FileNotFound", "cannot open '" + path + "'");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected_count * sizeof(T)) {
        throw DataError("BadVolume", "'" + path + "' holds " + std::to_string(bytes) +
                                         " bytes, expected " +
                                         std::to_string(expected_count * sizeof(T)));
    }
    in.seekg(0, std::ios::beg);
    std::vector<T> out(expected_count);
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw DataError("BadVolume", "short read from '" + path + "'");
    return out;
}

}  // namespace

VolumeBundle load_volume_bundle(const std::string& sidecar_path) {
    std::ifstream in(sidecar_path);
    if (!in) throw DataError("FileNotFound", "cannot open '" + sidecar_path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("BadSidecar", sidecar_path + ": " + e.what());
    }

    for (const char* key : {"dims", "voxel_size_mm"}) {
        if (!j.contains(key)) throw DataError("BadSidecar", sidecar_path + ": missing '" + key + "'");
    }
    const auto dims = j["dims"];
    if (!dims.is_array() || dims.size() != 4) {
        throw DataError("BadSidecar", sidecar_path + ": dims must be [X,Y,Z,T]");
    }
    const auto vox = j["voxel_size_mm"];
    if (!vox.is_array() || vox.size() != 3) {
        throw DataError("BadSidecar", sidecar_path + ": voxel_size_mm must be [dx,dy,dz]");
    }

    VolumeBundle bundle;
    Volume4D& v = bundle.volume;
    v.nx = dims[0].get<int>();
    v.ny = dims[1].get<int>();
    v.nz = dims[2].get<int>();
    v.nt = dims[3].get<int>();
    for (int i = 0; i < 3; ++i) {
        v.voxel_size_mm[static_cast<std::size_t>(i)] = vox[static_cast<std::size_t>(i)].get<double>();
    }
    if (v.nx < 1 || v.ny < 1 || v.nz < 1 || v.nt < 2) {
        throw DataError("BadSidecar", sidecar_path + ": bad dims");
    }
    const std::size_t nvox = static_cast<std::size_t>(v.nx) * v.ny * v.nz;

    const auto base_dir = std::filesystem::path(sidecar_path).parent_path();
    std::string data_path;
    if (j.contains("data_path")) {
        data_path = resolve_path(base_dir, j["data_path"].get<std::string>());
    } else {
        std::filesystem::path p(sidecar_path);
        p.replace_extension(".bin");
        data_path = p.string();
    }
    v.data = read_binary<double>(data_path, nvox * static_cast<std::size_t>(v.nt));

    if (j.contains("mask_path")) {
        v.mask = read_binary<std::uint8_t>(resolve_path(base_dir, j["mask_path"].get<std::string>()),
                                           nvox);
    } else {
        v.mask.assign(nvox, 1);
    }

    if (!j.contains("labels_path")) {
        throw DataError("BadSidecar", sidecar_path + ": missing 'labels_path'");
    }
    const auto raw =
        read_binary<std::int32_t>(resolve_path(base_dir, j["labels_path"].get<std::string>()), nvox);
    bundle.labels.nx = v.nx;
    bundle.labels.ny = v.ny;
    bundle.labels.nz = v.nz;
    bundle.labels.labels.assign(raw.begin(), raw.end());

    v.validate();
    return bundle;
}

RehoFeatureResult compute_reho_features(const VolumeBundle& bundle, const RoiRegistry& registry,
                                        int cluster, double fwhm_mm, bool allow_missing) {
    auto reho = reho_map(bundle.volume, cluster);
    const auto standardized = standardize_map(reho.map, bundle.volume.mask);
    const auto smoothed =
        smooth_gaussian(standardized, bundle.volume.mask, fwhm_mm, bundle.volume.voxel_size_mm);
    RehoFeatureResult out;
    out.parcels = parcellate(smoothed, bundle.volume.mask, bundle.labels, registry, allow_missing);
    out.constant_voxel_count = reho.constant_voxel_count;
    return out;
}

}  // namespace absorbkit
