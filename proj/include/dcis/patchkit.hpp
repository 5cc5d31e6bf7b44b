#pragma once

#include <array>
#include <cstdint>
#include <list>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>

#include "dcis/datamodel.hpp"
#include "dcis/image.hpp"
#include "dcis/rng.hpp"

namespace dcis {

// Extraction frame parameters. Defaults follow the clinical protocol this
// pipeline reproduces: 512 px patches at 0.88 um/px (x10) with a 90 um border.
struct PatchSpec {
    int size_px = 512;
    double target_mpp = 0.88;
    double border_um = 90.0;
};

// Axis-aligned lesion box in the extraction frame, inclusive-exclusive pixel
// coordinates. Coordinates may have been clamped to the region image; the
// pad_* fields record what was cut so extraction can reflect-fill it. The
// logical (unclamped) extent is x0 - pad_left .. x1 + pad_right, same for y.
struct LesionBox {
    long x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    long pad_left = 0, pad_top = 0, pad_right = 0, pad_bottom = 0;

    long full_x0() const { return x0 - pad_left; }
    long full_y0() const { return y0 - pad_top; }
    long full_x1() const { return x1 + pad_right; }
    long full_y1() const { return y1 + pad_bottom; }
    long full_width() const { return full_x1() - full_x0(); }
    long full_height() const { return full_y1() - full_y0(); }
};

struct AugmentationConfig {
    bool enabled = true;
    double max_translate_frac = 0.25;     // of patch size, per axis
    double max_rotate_deg = 90.0;
    bool allow_flips = true;              // horizontal and vertical, p = 0.5 each
    double max_shear_frac = 0.20;
    double max_zoom_frac = 0.20;
    double max_channel_shift_frac = 0.20; // multiplicative, per channel

    void validate() const;
};

// The concrete transform drawn for one augmentation call.
struct AugmentParams {
    double translate_x = 0.0, translate_y = 0.0;  // pixels
    double rotate_deg = 0.0;
    bool flip_h = false, flip_v = false;
    double shear = 0.0;        // x' = x + shear * y, about the centre
    double zoom = 1.0;         // uniform scale about the centre
    std::array<double, 3> channel_scale = {1.0, 1.0, 1.0};

    bool is_identity() const;
};

struct Patch {
    Image pixels;              // size_px x size_px
    std::string source_lesion;
    long offset_x = 0, offset_y = 0;  // crop origin relative to the box's full extent
};

// Physical resolution after a magnification change: base_mpp * base_mag / target_mag.
double mpp_at_magnification(double base_mpp, double base_mag, double target_mag);

// Rescale the polygon into the extraction frame, take its bounding box and
// grow every side by round(border_um / target_mpp) pixels. When the source
// image extent (in source pixels) is supplied, coordinates are clamped to the
// image and the cut margins recorded for reflect-padding at extraction.
LesionBox fit_lesion_box(std::span<const std::array<double, 2>> polygon, double source_mpp,
                         const PatchSpec& spec, const std::string& lesion_id = {},
                         std::optional<std::array<long, 2>> source_extent = std::nullopt);

// Crop one patch at a uniformly random origin inside the box extent
// (x drawn before y). Boxes smaller than the patch give a centred crop.
// Pixels outside the region image are reflection-filled. The region is
// resampled to target_mpp first when its mpp differs by > 1e-6 relative.
Patch extract_patch(const RegionImage& region, const LesionBox& box, const PatchSpec& spec,
                    Rng& rng, const std::string& lesion_id = {});

// Deterministic centred crop (no RNG); used for normalization statistics.
Patch extract_centered(const RegionImage& region, const LesionBox& box, const PatchSpec& spec,
                       const std::string& lesion_id = {});

AugmentParams sample_augment_params(const AugmentationConfig& config, int size_px, Rng& rng);
Patch apply_augmentation(const Patch& patch, const AugmentParams& params);

// Sample + apply. Disabled config returns the patch unchanged, byte for byte.
Patch augment(const Patch& patch, const AugmentationConfig& config, Rng& rng);

// Decoded region images keyed by path, LRU-bounded by total pixel bytes.
class ImageCache {
public:
    explicit ImageCache(std::size_t max_bytes = 768ull << 20) : max_bytes_(max_bytes) {}

    // The reference stays valid until the entry is evicted; callers must not
    // hold it across another get(). mpp comes from the manifest, not the file.
    const RegionImage& get(const DatasetManifest& manifest, const LesionRecord& lesion);

private:
    struct Entry {
        RegionImage region;
        std::list<std::string>::iterator lru_pos;
    };

    std::size_t max_bytes_;
    std::size_t used_bytes_ = 0;
    std::list<std::string> lru_;  // front = most recent
    std::unordered_map<std::string, Entry> entries_;
};

}  // namespace dcis
