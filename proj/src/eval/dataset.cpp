#include "drift/eval/dataset.hpp"

#include "drift/core/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace drift {
namespace fs = std::filesystem;

namespace {

bool is_image(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

std::vector<fs::path> sorted_files(const fs::path& dir, bool (*keep)(const fs::path&)) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) {
        return out;
    }
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && keep(e.path())) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

fs::path layout_dir(const fs::path& root, const std::string& kind, const std::string& resolution) {
    if (!resolution.empty() && fs::is_directory(root / kind / resolution)) {
        return root / kind / resolution;
    }
    return root / kind;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
            line.pop_back();
        }
        if (!line.empty()) {
            out.push_back(line);
        }
    }
    return out;
}

// Binary 0/255 grayscale annotations (DAVIS 2016 style) carry a single object.
void normalize_binary(LabelImage& img) {
    if (img.indexed) {
        return;
    }
    bool binary = true;
    bool any_255 = false;
    for (auto v : img.labels.values()) {
        binary = binary && (v == 0 || v == 255);
        any_255 = any_255 || v == 255;
    }
    if (binary && any_255) {
        for (auto& v : img.labels.values()) {
            v = v == 255 ? 1 : 0;
        }
    }
}

bool same_palette_prefix(const Palette& a, const Palette& b, int used) {
    const auto n = static_cast<std::size_t>(std::min<int>(used + 1, static_cast<int>(std::min(a.size(), b.size()))));
    for (std::size_t i = 0; i < n; ++i) {
        if (a[i] != b[i]) {
            return false;
        }
    }
    return true;
}

} // namespace

DatasetLayout parse_layout(const std::string& name) {
    if (name == "davis") {
        return DatasetLayout::davis;
    }
    if (name == "ytvos") {
        return DatasetLayout::ytvos;
    }
    if (name == "longvideos") {
        return DatasetLayout::longvideos;
    }
    throw ConfigError("unknown dataset layout '" + name + "' (expected davis, ytvos or longvideos)");
}

std::string to_string(DatasetLayout layout) {
    switch (layout) {
    case DatasetLayout::davis:
        return "davis";
    case DatasetLayout::ytvos:
        return "ytvos";
    case DatasetLayout::longvideos:
        return "longvideos";
    }
    return "unknown";
}

std::set<int> SequenceEntry::annotated_frames() const {
    std::set<int> out;
    for (const auto& [f, p] : annotations) {
        out.insert(f);
    }
    return out;
}

int DatasetManifest::object_count() const {
    int n = 0;
    for (const auto& s : sequences) {
        n += static_cast<int>(s.first_frame.size());
    }
    return n;
}

const SequenceEntry& DatasetManifest::find(const std::string& name) const {
    for (const auto& s : sequences) {
        if (s.name == name) {
            return s;
        }
    }
    throw ConfigError("sequence '" + name + "' is not in the manifest");
}

HardMask load_annotation(const fs::path& path, int object_count) {
    LabelImage img = read_label_png(path);
    normalize_binary(img);
    HardMask mask(std::move(img.labels), object_count);
    mask.validate();
    return mask;
}

DatasetManifest load_manifest(const fs::path& root, DatasetLayout layout, const ManifestOptions& options) {
    const fs::path frames_root = layout_dir(root, "JPEGImages", options.resolution);
    const fs::path annotations_root = layout_dir(root, "Annotations", options.resolution);
    if (!fs::is_directory(frames_root)) {
        throw IoError("no sequences: " + frames_root.string() + " does not exist");
    }

    std::vector<std::string> names;
    if (!options.image_set.empty()) {
        fs::path list = root / "ImageSets" / options.image_set;
        if (!fs::exists(list)) {
            list += ".txt";
        }
        names = read_lines(list);
    } else {
        for (const auto& e : fs::directory_iterator(frames_root)) {
            if (e.is_directory()) {
                names.push_back(e.path().filename().string());
            }
        }
        std::sort(names.begin(), names.end());
    }
    if (!options.only.empty()) {
        std::erase_if(names, [&](const std::string& n) {
            return std::find(options.only.begin(), options.only.end(), n) == options.only.end();
        });
    }

    std::set<std::string> unseen;
    if (!options.unseen_categories.empty()) {
        for (auto& c : read_lines(options.unseen_categories)) {
            unseen.insert(c);
        }
    }
    nlohmann::json meta;
    if (layout == DatasetLayout::ytvos && fs::exists(root / "meta.json")) {
        std::ifstream in(root / "meta.json");
        try {
            meta = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("corrupt meta.json: " + std::string(e.what()));
        }
    }

    DatasetManifest manifest;
    manifest.layout = layout;
    manifest.root = root;
    for (const auto& name : names) {
        SequenceEntry seq;
        seq.name = name;
        seq.frames = sorted_files(frames_root / name, is_image);
        if (seq.frames.empty()) {
            throw IoError("sequence '" + name + "' has no frames");
        }
        std::map<std::string, int> index_of;
        for (int i = 0; i < seq.frame_count(); ++i) {
            index_of[seq.frame_stem(i)] = i;
        }
        for (const auto& a : sorted_files(annotations_root / name, [](const fs::path& p) { return p.extension() == ".png"; })) {
            const auto it = index_of.find(a.stem().string());
            if (it == index_of.end()) {
                throw IoError("annotation " + a.string() + " has no matching frame");
            }
            seq.annotations[it->second] = a;
        }
        if (!seq.annotations.contains(0)) {
            throw IoError("sequence '" + name + "': missing annotation for frame 0");
        }
        bool have_palette = false;
        for (const auto& [frame, path] : seq.annotations) {
            LabelImage img = read_label_png(path);
            normalize_binary(img);
            int top = 0;
            for (auto v : img.labels.values()) {
                top = std::max<int>(top, v);
                if (v != 0 && !seq.first_frame.contains(v)) {
                    seq.first_frame[v] = frame;
                }
            }
            if (img.indexed) {
                if (!have_palette) {
                    seq.palette = img.palette;
                    have_palette = true;
                } else if (!same_palette_prefix(seq.palette, img.palette, top)) {
                    throw IoError("sequence '" + name + "': palette mismatch in " + path.string());
                }
            }
        }
        if (!have_palette) {
            seq.palette = davis_palette();
        }
        if (seq.first_frame.empty()) {
            throw IoError("sequence '" + name + "': frame 0 annotation contains no object");
        }
        const int objects = seq.first_frame.rbegin()->first;
        if (static_cast<int>(seq.first_frame.size()) != objects) {
            throw IoError("sequence '" + name + "': object ids are not contiguous from 1");
        }
        if (layout != DatasetLayout::ytvos) {
            for (const auto& [object, first] : seq.first_frame) {
                if (first != 0) {
                    throw IoError("sequence '" + name + "': object " + std::to_string(object) +
                                  " is absent from the frame 0 annotation");
                }
            }
        }
        if (!meta.is_null() && meta.contains("videos") && meta["videos"].contains(name)) {
            const auto& objs = meta["videos"][name]["objects"];
            for (auto it = objs.begin(); it != objs.end(); ++it) {
                if (it.value().contains("category")) {
                    seq.categories[std::stoi(it.key())] = it.value()["category"].get<std::string>();
                }
            }
        }
        if (!options.unseen_categories.empty()) {
            for (const auto& [object, category] : seq.categories) {
                seq.seen[object] = !unseen.contains(category);
            }
        }
        manifest.sequences.push_back(std::move(seq));
    }
    if (manifest.sequences.empty()) {
        throw IoError("no sequences under " + root.string());
    }
    return manifest;
}

} // namespace drift
