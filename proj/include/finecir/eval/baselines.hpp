#pragma once

// Pretrained vision-language embedding contract and the three unimodal /
// late-fusion retrieval baselines built on it.

#include <set>
#include <string>
#include <vector>

#include "finecir/compose/encoders.hpp"
#include "finecir/eval/metrics.hpp"

namespace finecir::eval {

/// Joint image-text embedding space (a frozen contrastive backbone).
class VlpBackend {
public:
    virtual ~VlpBackend() = default;
    virtual Eigen::Index dim() const = 0;
    virtual Row embed_image(const ImageInput& x) const = 0;
    virtual Row embed_text(const std::string& text) const = 0;
    virtual std::string name() const = 0;
};

inline Row unit(const Row& v) {
    const double n = v.norm();
    return n > 0.0 ? Row(v / n) : v;
}

inline GalleryIndex build_image_index(const VlpBackend& vlp, const FeatureStore& store,
                                      const std::vector<std::string>& ids) {
    GalleryIndex index;
    for (const auto& id : ids) index.add(id, vlp.embed_image(store.get(id)));
    return index;
}

inline std::vector<std::string> baseline_text_only(const std::string& text, const VlpBackend& vlp,
                                                   const GalleryIndex& index, const std::set<std::string>& exclude = {}) {
    return rank(vlp.embed_text(text), index, exclude);
}

inline std::vector<std::string> baseline_image_only(const ImageInput& reference, const VlpBackend& vlp,
                                                    const GalleryIndex& index,
                                                    const std::set<std::string>& exclude = {}) {
    return rank(vlp.embed_image(reference), index, exclude);
}

/// Ranks by the normalized sum of the unit image and unit text embeddings.
inline Row fuse_image_text(const Row& image, const Row& text) { return unit(unit(image) + unit(text)); }

inline std::vector<std::string> baseline_image_plus_text(const ImageInput& reference, const std::string& text,
                                                         const VlpBackend& vlp, const GalleryIndex& index,
                                                         const std::set<std::string>& exclude = {}) {
    return rank(fuse_image_text(vlp.embed_image(reference), vlp.embed_text(text)), index, exclude);
}

}  // namespace finecir::eval
