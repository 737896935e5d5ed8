#pragma once

#include <cstddef>
#include <vector>

#include "robult/tensor.hpp"

namespace robult {

enum class TaskKind { classification, regression };

inline const char* to_string(TaskKind task) {
    return task == TaskKind::classification ? "classification" : "regression";
}

/// A mini-batch of B samples over M modalities.
///
/// `labels` always has B entries: class ids for classification, discretized
/// sentiment bins for regression. Entries of unlabeled rows are never read.
/// `available[i][j]` says whether modality i of row j may be read.
struct Batch {
    std::vector<Matrix> inputs;
    std::vector<int> labels;
    std::vector<double> targets;
    std::vector<bool> labeled;
    std::vector<std::vector<bool>> available;

    std::size_t size() const { return inputs.empty() ? 0 : inputs.front().rows; }
    std::size_t modalities() const { return inputs.size(); }

    bool fully_available() const {
        for (const auto& col : available)
            for (bool a : col)
                if (!a) return false;
        return true;
    }
};

}  // namespace robult
