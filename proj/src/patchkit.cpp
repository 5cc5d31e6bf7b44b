#include "dcis/patchkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

namespace dcis {

double mpp_at_magnification(double base_mpp, double base_mag, double target_mag) {
    if (!(base_mpp > 0.0) || !(base_mag > 0.0) || !(target_mag > 0.0))
        throw ValidationError("mpp_at_magnification: all inputs must be positive");
    return base_mpp * (base_mag / target_mag);
}

void AugmentationConfig::validate() const {
    auto frac_ok = [](double f) { return f >= 0.0 && f <= 1.0; };
    if (!frac_ok(max_translate_frac) || !frac_ok(max_shear_frac) || !frac_ok(max_zoom_frac) ||
        !frac_ok(max_channel_shift_frac))
        throw ValidationError("augmentation fractions must lie in [0, 1]");
    if (max_rotate_deg < 0.0 || max_rotate_deg > 180.0)
        throw ValidationError("augmentation rotation must lie in [0, 180] degrees");
}

bool AugmentParams::is_identity() const {
    return translate_x == 0.0 && translate_y == 0.0 && rotate_deg == 0.0 && !flip_h && !flip_v &&
           shear == 0.0 && zoom == 1.0 && channel_scale[0] == 1.0 && channel_scale[1] == 1.0 &&
           channel_scale[2] == 1.0;
}

LesionBox fit_lesion_box(std::span<const std::array<double, 2>> polygon, double source_mpp,
                         const PatchSpec& spec, const std::string& lesion_id,
                         std::optional<std::array<long, 2>> source_extent) {
    const std::string label = lesion_id.empty() ? "<unnamed>" : lesion_id;
    if (polygon.size() < 3)
        throw ValidationError("lesion " + label + ": polygon needs >= 3 vertices");
    if (!(source_mpp > 0.0) || !(spec.target_mpp > 0.0))
        throw ValidationError("lesion " + label + ": mpp values must be positive");

    double area2 = 0.0;
    for (std::size_t i = 0; i < polygon.size(); ++i) {
        const auto& a = polygon[i];
        const auto& b = polygon[(i + 1) % polygon.size()];
        area2 += a[0] * b[1] - b[0] * a[1];
    }
    if (area2 == 0.0)
        throw ValidationError("lesion " + label + ": degenerate polygon with zero area");

    const double scale = source_mpp / spec.target_mpp;
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    double max_x = -min_x, max_y = -min_y;
    for (const auto& v : polygon) {
        min_x = std::min(min_x, v[0] * scale);
        max_x = std::max(max_x, v[0] * scale);
        min_y = std::min(min_y, v[1] * scale);
        max_y = std::max(max_y, v[1] * scale);
    }

    const long border_px = std::llround(spec.border_um / spec.target_mpp);
    LesionBox box;
    box.x0 = static_cast<long>(std::floor(min_x)) - border_px;
    box.y0 = static_cast<long>(std::floor(min_y)) - border_px;
    box.x1 = static_cast<long>(std::ceil(max_x)) + border_px;
    box.y1 = static_cast<long>(std::ceil(max_y)) + border_px;
    if (box.x1 <= box.x0) box.x1 = box.x0 + 1;
    if (box.y1 <= box.y0) box.y1 = box.y0 + 1;

    if (source_extent) {
        const long img_w = std::llround(static_cast<double>((*source_extent)[0]) * scale);
        const long img_h = std::llround(static_cast<double>((*source_extent)[1]) * scale);
        if (box.x1 <= 0 || box.x0 >= img_w || box.y1 <= 0 || box.y0 >= img_h)
            throw ValidationError("lesion " + label + ": box lies entirely outside the region image");
        const long cx0 = std::clamp(box.x0, 0L, img_w);
        const long cx1 = std::clamp(box.x1, 0L, img_w);
        const long cy0 = std::clamp(box.y0, 0L, img_h);
        const long cy1 = std::clamp(box.y1, 0L, img_h);
        box.pad_left = cx0 - box.x0;
        box.pad_right = box.x1 - cx1;
        box.pad_top = cy0 - box.y0;
        box.pad_bottom = box.y1 - cy1;
        box.x0 = cx0;
        box.x1 = cx1;
        box.y0 = cy0;
        box.y1 = cy1;
    }
    return box;
}

namespace {

// Crop with reflection at the image borders. Rows fully inside the source are
// a straight copy.
Image crop_reflected(const Image& src, long ox, long oy, int size) {
    Image out(size, size);
    const bool x_inside = ox >= 0 && ox + size <= src.width;
    for (int y = 0; y < size; ++y) {
        const int sy = reflect_index(static_cast<int>(oy + y), src.height);
        if (x_inside) {
            std::memcpy(out.rgb.data() + static_cast<std::size_t>(y) * size * 3,
                        src.rgb.data() + (static_cast<std::size_t>(sy) * src.width + ox) * 3,
                        static_cast<std::size_t>(size) * 3);
            continue;
        }
        for (int x = 0; x < size; ++x) {
            const int sx = reflect_index(static_cast<int>(ox + x), src.width);
            out.at(x, y, 0) = src.at(sx, sy, 0);
            out.at(x, y, 1) = src.at(sx, sy, 1);
            out.at(x, y, 2) = src.at(sx, sy, 2);
        }
    }
    return out;
}

struct PreparedRegion {
    const Image* image;
    Image resampled;  // filled only when resampling was needed
};

PreparedRegion prepare_region(const RegionImage& region, const PatchSpec& spec) {
    if (!(region.mpp > 0.0)) throw ValidationError("region image has non-positive mpp");
    PreparedRegion prep{&region.image, {}};
    const double rel = std::abs(region.mpp - spec.target_mpp) / spec.target_mpp;
    if (rel > 1e-6) {
        prep.resampled = resample_bilinear(region.image, region.mpp / spec.target_mpp);
        prep.image = &prep.resampled;
    }
    return prep;
}

Patch crop_patch(const Image& frame, const LesionBox& box, const PatchSpec& spec, long ox, long oy,
                 const std::string& lesion_id) {
    if (box.full_x1() <= 0 || box.full_x0() >= frame.width || box.full_y1() <= 0 ||
        box.full_y0() >= frame.height)
        throw ValidationError("lesion " + (lesion_id.empty() ? "<unnamed>" : lesion_id) +
                              ": box lies entirely outside the region image");
    Patch patch;
    patch.pixels = crop_reflected(frame, ox, oy, spec.size_px);
    patch.source_lesion = lesion_id;
    patch.offset_x = ox - box.full_x0();
    patch.offset_y = oy - box.full_y0();
    return patch;
}

long centered_origin(long lo, long extent, int size) { return lo + (extent - size) / 2; }

}  // namespace

Patch extract_patch(const RegionImage& region, const LesionBox& box, const PatchSpec& spec,
                    Rng& rng, const std::string& lesion_id) {
    if (spec.size_px <= 0) throw ValidationError("patch size must be positive");
    PreparedRegion prep = prepare_region(region, spec);

    const long w = box.full_width(), h = box.full_height();
    long ox, oy;
    if (w >= spec.size_px)
        ox = box.full_x0() + rng.uniform_int(0, w - spec.size_px);
    else
        ox = centered_origin(box.full_x0(), w, spec.size_px);
    if (h >= spec.size_px)
        oy = box.full_y0() + rng.uniform_int(0, h - spec.size_px);
    else
        oy = centered_origin(box.full_y0(), h, spec.size_px);

    return crop_patch(*prep.image, box, spec, ox, oy, lesion_id);
}

Patch extract_centered(const RegionImage& region, const LesionBox& box, const PatchSpec& spec,
                       const std::string& lesion_id) {
    if (spec.size_px <= 0) throw ValidationError("patch size must be positive");
    PreparedRegion prep = prepare_region(region, spec);
    const long ox = centered_origin(box.full_x0(), box.full_width(), spec.size_px);
    const long oy = centered_origin(box.full_y0(), box.full_height(), spec.size_px);
    return crop_patch(*prep.image, box, spec, ox, oy, lesion_id);
}

AugmentParams sample_augment_params(const AugmentationConfig& config, int size_px, Rng& rng) {
    config.validate();
    AugmentParams p;
    if (!config.enabled) return p;
    const double t = config.max_translate_frac * size_px;
    p.translate_x = rng.uniform(-t, t);
    p.translate_y = rng.uniform(-t, t);
    p.rotate_deg = rng.uniform(-config.max_rotate_deg, config.max_rotate_deg);
    if (config.allow_flips) {
        p.flip_h = rng.bernoulli(0.5);
        p.flip_v = rng.bernoulli(0.5);
    }
    p.shear = rng.uniform(-config.max_shear_frac, config.max_shear_frac);
    p.zoom = rng.uniform(1.0 - config.max_zoom_frac, 1.0 + config.max_zoom_frac);
    for (int c = 0; c < 3; ++c)
        p.channel_scale[c] =
            rng.uniform(1.0 - config.max_channel_shift_frac, 1.0 + config.max_channel_shift_frac);
    return p;
}

namespace {

struct Mat3 {
    // row-major 3x3, last row implicitly (0 0 1) maintained explicitly for clarity
    double a[9];

    static Mat3 identity() { return {{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }
    static Mat3 translate(double tx, double ty) { return {{1, 0, tx, 0, 1, ty, 0, 0, 1}}; }
    static Mat3 scale(double sx, double sy) { return {{sx, 0, 0, 0, sy, 0, 0, 0, 1}}; }
    static Mat3 rotate_deg(double deg) {
        const double r = deg * std::numbers::pi / 180.0;
        const double c = std::cos(r), s = std::sin(r);
        return {{c, -s, 0, s, c, 0, 0, 0, 1}};
    }
    static Mat3 shear_x(double k) { return {{1, k, 0, 0, 1, 0, 0, 0, 1}}; }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += a[i * 3 + k] * o.a[k * 3 + j];
                r.a[i * 3 + j] = acc;
            }
        return r;
    }
};

Mat3 about_center(const Mat3& m, double cx, double cy) {
    return Mat3::translate(cx, cy) * m * Mat3::translate(-cx, -cy);
}

}  // namespace

Patch apply_augmentation(const Patch& patch, const AugmentParams& params) {
    Patch out = patch;
    if (params.is_identity()) return out;

    const int size = patch.pixels.width;
    const double cx = (size - 1) / 2.0, cy = (patch.pixels.height - 1) / 2.0;

    const bool geometric = params.translate_x != 0.0 || params.translate_y != 0.0 ||
                           params.rotate_deg != 0.0 || params.flip_h || params.flip_v ||
                           params.shear != 0.0 || params.zoom != 1.0;
    if (geometric) {
        // Output pixels sample the input through the inverse of each step, in
        // reverse application order: translate, rotate, flip, shear, zoom.
        Mat3 m = Mat3::translate(-params.translate_x, -params.translate_y);
        m = m * about_center(Mat3::rotate_deg(-params.rotate_deg), cx, cy);
        m = m * about_center(Mat3::scale(params.flip_h ? -1.0 : 1.0, params.flip_v ? -1.0 : 1.0),
                             cx, cy);
        m = m * about_center(Mat3::shear_x(-params.shear), cx, cy);
        m = m * about_center(Mat3::scale(1.0 / params.zoom, 1.0 / params.zoom), cx, cy);

        const double coeffs[6] = {m.a[0], m.a[1], m.a[2], m.a[3], m.a[4], m.a[5]};
        out.pixels = Image(patch.pixels.width, patch.pixels.height);
        warp_affine_bilinear(patch.pixels, out.pixels, coeffs);
    }

    if (params.channel_scale[0] != 1.0 || params.channel_scale[1] != 1.0 ||
        params.channel_scale[2] != 1.0) {
        for (std::size_t i = 0; i < out.pixels.rgb.size(); i += 3)
            for (int c = 0; c < 3; ++c) {
                const long v = std::lround(out.pixels.rgb[i + c] * params.channel_scale[c]);
                out.pixels.rgb[i + c] = static_cast<std::uint8_t>(std::clamp(v, 0L, 255L));
            }
    }
    return out;
}

Patch augment(const Patch& patch, const AugmentationConfig& config, Rng& rng) {
    if (!config.enabled) {
        config.validate();
        return patch;
    }
    return apply_augmentation(patch, sample_augment_params(config, patch.pixels.width, rng));
}

const RegionImage& ImageCache::get(const DatasetManifest& manifest, const LesionRecord& lesion) {
    const std::string key = manifest.resolve_image(lesion).string();
    auto it = entries_.find(key);
    if (it != entries_.end()) {
        if (it->second.region.mpp != lesion.mpp)
            throw ValidationError("lesion " + lesion.lesion_id +
                                  ": manifest mpp disagrees with other lesions on image " + key);
        lru_.erase(it->second.lru_pos);
        lru_.push_front(key);
        it->second.lru_pos = lru_.begin();
        return it->second.region;
    }

    RegionImage region{load_png(key), lesion.mpp};
    const std::size_t bytes = region.image.byte_size();
    while (!lru_.empty() && used_bytes_ + bytes > max_bytes_) {
        const std::string& victim = lru_.back();
        auto vit = entries_.find(victim);
        used_bytes_ -= vit->second.region.image.byte_size();
        entries_.erase(vit);
        lru_.pop_back();
    }
    lru_.push_front(key);
    auto [ins, ok] = entries_.emplace(key, Entry{std::move(region), lru_.begin()});
    (void)ok;
    used_bytes_ += bytes;
    return ins->second.region;
}

}  // namespace dcis
