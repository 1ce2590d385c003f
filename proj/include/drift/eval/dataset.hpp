#pragma once

#include "drift/core/image_io.hpp"
#include "drift/core/types.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace drift {

enum class DatasetLayout { davis, ytvos, longvideos };

DatasetLayout parse_layout(const std::string& name);
std::string to_string(DatasetLayout layout);

struct SequenceEntry {
    std::string name;
    std::vector<std::filesystem::path> frames;
    /// Frame index -> annotation file.
    std::map<int, std::filesystem::path> annotations;
    /// Object id -> first annotated frame containing it.
    std::map<int, int> first_frame;
    /// Object id -> category name, when the dataset provides one.
    std::map<int, std::string> categories;
    /// Object id -> split tag (true: seen), when a split is configured.
    std::map<int, bool> seen;
    Palette palette;

    int frame_count() const { return static_cast<int>(frames.size()); }
    int object_count() const { return first_frame.empty() ? 0 : first_frame.rbegin()->first; }
    std::set<int> annotated_frames() const;
    std::string frame_stem(int frame) const { return frames.at(static_cast<std::size_t>(frame)).stem().string(); }
};

struct DatasetManifest {
    DatasetLayout layout = DatasetLayout::davis;
    std::filesystem::path root;
    std::vector<SequenceEntry> sequences;

    int object_count() const;
    const SequenceEntry& find(const std::string& name) const;
};

struct ManifestOptions {
    /// Sequence list file relative to the root (DAVIS ImageSets/2017/val.txt style); empty uses every directory.
    std::string image_set;
    /// Resolution subdirectory tried first under JPEGImages/ and Annotations/ (DAVIS).
    std::string resolution = "480p";
    /// Text file listing unseen category names, one per line (YouTube-VOS split).
    std::filesystem::path unseen_categories;
    /// Restrict to these sequences when non-empty.
    std::vector<std::string> only;
};

/// Walks a dataset root laid out as JPEGImages/<seq>/*.jpg and
/// Annotations/<seq>/*.png (optionally below a resolution subdirectory).
/// Throws IoError when there are no sequences, when frame 0 of a sequence has
/// no annotation, when annotations are not indexed/grayscale ("palette
/// mismatch") or disagree on the palette, or when an annotation names a frame
/// that does not exist. DAVIS and Long-Videos require every object in frame 0.
DatasetManifest load_manifest(const std::filesystem::path& root, DatasetLayout layout,
                              const ManifestOptions& options = {});

/// Ground-truth labels of one annotation file. Binary 0/255 grayscale masks map to label 1.
HardMask load_annotation(const std::filesystem::path& path, int object_count);

} // namespace drift
