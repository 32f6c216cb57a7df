#include "protoseg/dataset.hpp"

#include <algorithm>

#include "protoseg/common.hpp"
#include "protoseg/png_io.hpp"

namespace protoseg {

SyntheticSceneDataset::SyntheticSceneDataset(SyntheticWorld world, Vocabulary expanded_vocabulary,
                                             int n_scenes, std::uint64_t seed, int width,
                                             int height)
    : world_(std::move(world)), vocabulary_(std::move(expanded_vocabulary)) {
    require(vocabulary_.is_expanded(), "synthetic dataset: vocabulary must be expanded");
    require(n_scenes > 0, "synthetic dataset: need at least one scene");
    scenes_.reserve(static_cast<std::size_t>(n_scenes));
    for (int i = 0; i < n_scenes; ++i) {
        scenes_.push_back(make_scene(world_, seed, i, width, height));
    }
}

SyntheticSceneDataset::SyntheticSceneDataset(SyntheticWorld world, Vocabulary expanded_vocabulary,
                                             std::vector<SceneSpec> scenes)
    : world_(std::move(world)), vocabulary_(std::move(expanded_vocabulary)),
      scenes_(std::move(scenes)) {
    require(vocabulary_.is_expanded(), "synthetic dataset: vocabulary must be expanded");
    require(!scenes_.empty(), "synthetic dataset: need at least one scene");
}

DatasetItem SyntheticSceneDataset::item(int index) {
    require(index >= 0 && index < size(), "synthetic dataset: index out of range");
    RenderedScene scene = render_scene(scenes_[static_cast<std::size_t>(index)], world_,
                                       vocabulary_);
    DatasetItem out;
    out.id = "scene_" + std::to_string(index);
    out.image = std::move(scene.image);
    out.labels = std::move(scene.labels);
    return out;
}

FolderDataset::FolderDataset(std::filesystem::path root) : root_(std::move(root)) {
    const std::filesystem::path images = root_ / "images";
    require(std::filesystem::is_directory(images),
            "folder dataset: missing images directory at " + images.string());
    require(std::filesystem::is_directory(root_ / "labels"),
            "folder dataset: missing labels directory at " + (root_ / "labels").string());
    for (const auto& entry : std::filesystem::directory_iterator(images)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        ids_.push_back(entry.path().stem().string());
    }
    std::sort(ids_.begin(), ids_.end());
}

DatasetItem FolderDataset::item(int index) {
    require(index >= 0 && index < size(), "folder dataset: index out of range");
    const std::string& id = ids_[static_cast<std::size_t>(index)];
    DatasetItem out;
    out.id = id;
    out.image = png_read_rgb(root_ / "images" / (id + ".png"));
    out.labels = png_read_indexed(root_ / "labels" / (id + ".png"));
    require(out.labels.width == out.image.width && out.labels.height == out.image.height,
            "folder dataset: image and label sizes differ for '" + id + "'");
    return out;
}

}  // namespace protoseg
