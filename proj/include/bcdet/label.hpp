#pragma once

#include <compare>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcdet {

/// Action class. Single-task labels use `primary` only; compound verb/noun
/// labels store the verb in `primary` and the noun in `secondary`.
struct ActionLabel {
    int primary = -1;
    int secondary = -1;

    bool compound() const { return secondary >= 0; }
    auto operator<=>(const ActionLabel&) const = default;
};

/// Classification tasks of a dataset: {C} for a single task or {V, N} for
/// verb/noun. Logit rows are laid out task by task.
struct LabelSpace {
    std::vector<int> class_counts{1};

    bool compound() const { return class_counts.size() == 2; }

    int total_classes() const {
        int n = 0;
        for (int c : class_counts) n += c;
        return n;
    }

    int task_offset(int task) const {
        int off = 0;
        for (int i = 0; i < task; ++i) off += class_counts[static_cast<std::size_t>(i)];
        return off;
    }

    void validate() const {
        if (class_counts.empty() || class_counts.size() > 2)
            throw std::invalid_argument("label space: expected one task or a verb/noun pair");
        for (int c : class_counts)
            if (c < 1) throw std::invalid_argument("label space: class counts must be positive");
    }

    void check(const ActionLabel& label) const {
        const auto in_range = [](int v, int n) { return v >= 0 && v < n; };
        if (compound()) {
            if (!in_range(label.primary, class_counts[0]) || !in_range(label.secondary, class_counts[1]))
                throw std::out_of_range("label (" + std::to_string(label.primary) + ", " +
                                        std::to_string(label.secondary) + ") outside the verb/noun vocabulary");
        } else if (!in_range(label.primary, class_counts[0]) || label.secondary >= 0) {
            throw std::out_of_range("label " + std::to_string(label.primary) + " outside the vocabulary");
        }
    }
};

}  // namespace bcdet
