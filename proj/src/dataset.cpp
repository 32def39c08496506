#include "atnet/dataset.hpp"

#include <numeric>

namespace atnet {

Image center_crop_to_multiple(const Image& img, int divisor) {
    const int h = img.height / divisor * divisor;
    const int w = img.width / divisor * divisor;
    if (h == 0 || w == 0) throw InvalidArgument("image too small to crop to a multiple of " + std::to_string(divisor));
    if (h == img.height && w == img.width) return img;
    const int oy = (img.height - h) / 2, ox = (img.width - w) / 2;
    Image out(h, w, img.channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y + oy, x + ox, c);
    return out;
}

PairDataset::PairDataset(std::vector<ManifestRecord> records, int divisor)
    : records_(std::move(records)), divisor_(divisor), cache_(records_.size()) {
    if (records_.empty()) throw InvalidArgument("dataset has no pairs");
}

PairDataset PairDataset::from_manifest(const std::filesystem::path& manifest, int divisor) {
    return PairDataset(read_manifest(manifest), divisor);
}

const TrainingPair& PairDataset::get(std::size_t index) {
    auto& slot = cache_.at(index);
    if (!slot) {
        const auto& r = records_[index];
        Image degraded = load_image(r.degraded);
        Image clean = load_image(r.clean);
        validate_pipeline_image(degraded);
        require_same_shape(degraded, clean, ("pair " + r.degraded.string()).c_str());
        if (clean.channels != 3) throw InvalidArgument("training pairs must be RGB: " + r.clean.string());
        slot = TrainingPair{to_tensor(center_crop_to_multiple(degraded, divisor_)),
                            to_tensor(center_crop_to_multiple(clean, divisor_))};
    }
    return *slot;
}

EpochSampler::EpochSampler(std::uint64_t seed, std::size_t dataset_size) : seed_(seed), size_(dataset_size) {
    if (dataset_size == 0) throw InvalidArgument("EpochSampler: empty dataset");
}

const std::vector<std::size_t>& EpochSampler::permutation(std::uint64_t epoch) {
    auto it = epochs_.find(epoch);
    if (it != epochs_.end()) return it->second;
    std::vector<std::size_t> perm(size_);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    SeededRng rng(derive_seed(seed_, {0x45504F4348ULL, epoch}));
    for (std::size_t i = size_; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
    // Only a couple of epochs are live at once.
    while (epochs_.size() > 4) epochs_.erase(epochs_.begin());
    return epochs_.emplace(epoch, std::move(perm)).first->second;
}

std::vector<std::size_t> EpochSampler::batch(std::uint64_t iteration, int batch_size) {
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    for (int b = 0; b < batch_size; ++b) {
        const std::uint64_t pos = iteration * static_cast<std::uint64_t>(batch_size) + b;
        out.push_back(permutation(pos / size_)[pos % size_]);
    }
    return out;
}

}  // namespace atnet
