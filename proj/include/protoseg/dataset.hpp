#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protoseg/image.hpp"
#include "protoseg/synthetic.hpp"
#include "protoseg/vocabulary.hpp"

namespace protoseg {

// Ground-truth label meaning "not evaluated at this pixel".
inline constexpr std::uint16_t kIgnoreLabel = 255;

struct DatasetItem {
    std::string id;
    Image image;
    IndexGrid labels;  // expanded-vocabulary indices; kIgnoreLabel is skipped
};

class DatasetAdapter {
public:
    virtual ~DatasetAdapter() = default;
    virtual std::string name() const = 0;
    virtual int size() const = 0;
    virtual DatasetItem item(int index) = 0;
};

// Procedurally rendered scenes from the synthetic world; fully deterministic
// in (seed, index).
class SyntheticSceneDataset : public DatasetAdapter {
public:
    SyntheticSceneDataset(SyntheticWorld world, Vocabulary expanded_vocabulary, int n_scenes,
                          std::uint64_t seed, int width = 448, int height = 448);
    SyntheticSceneDataset(SyntheticWorld world, Vocabulary expanded_vocabulary,
                          std::vector<SceneSpec> scenes);

    std::string name() const override { return "synthetic-scenes"; }
    int size() const override { return static_cast<int>(scenes_.size()); }
    DatasetItem item(int index) override;
    const SceneSpec& scene(int index) const { return scenes_.at(static_cast<std::size_t>(index)); }

private:
    SyntheticWorld world_;
    Vocabulary vocabulary_;
    std::vector<SceneSpec> scenes_;
};

// On-disk split: <root>/images/<id>.png (RGB) and <root>/labels/<id>.png
// (indexed or grayscale; raw values are expanded-vocabulary indices). Items
// are ordered by id.
class FolderDataset : public DatasetAdapter {
public:
    explicit FolderDataset(std::filesystem::path root);

    std::string name() const override { return "folder:" + root_.string(); }
    int size() const override { return static_cast<int>(ids_.size()); }
    DatasetItem item(int index) override;

private:
    std::filesystem::path root_;
    std::vector<std::string> ids_;
};

}  // namespace protoseg
