#pragma once

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "sama/image.hpp"
#include "sama/record.hpp"

namespace sama {

inline constexpr std::string_view kSyntheticScheme = "synthetic://";
inline constexpr Rgb kSyntheticBackground = {40, 40, 40};

/// Named colors understood by the synthetic renderer.
std::optional<Rgb> named_color(std::string_view name);
/// First named color appearing as a word of `category` ("red square" -> red).
std::optional<Rgb> category_color(std::string_view category);

/// Frame `t` of a synthetic record: background fill, then every object's mask
/// painted in its category color, in object order.
Image render_synthetic_frame(const GroundedDialogueRecord& record, int t);

/// Resolves every sampled frame reference: `synthetic://` references are
/// rendered, anything else is a PPM path relative to `base_dir`. Throws
/// DataError for a missing or unreadable frame.
std::vector<Image> load_record_frames(const GroundedDialogueRecord& record, const std::filesystem::path& base_dir);

Image resize_nearest(const Image& image, int width, int height);
BinaryMask resize_nearest(const BinaryMask& mask, int width, int height);

}  // namespace sama
