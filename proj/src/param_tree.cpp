#include "fedload/param_tree.hpp"

#include <algorithm>

#include "fedload/errors.hpp"

namespace fedload {

namespace {

auto lower_bound_entry(std::vector<ParamTree::Entry>& entries, const std::string& path) {
    return std::lower_bound(entries.begin(), entries.end(), path,
                            [](const ParamTree::Entry& e, const std::string& p) {
                                return e.first < p;
                            });
}

}  // namespace

void ParamTree::set(const std::string& path, Tensor value) {
    auto it = lower_bound_entry(entries_, path);
    if (it != entries_.end() && it->first == path) {
        it->second = std::move(value);
    } else {
        entries_.insert(it, {path, std::move(value)});
    }
}

const Tensor& ParamTree::at(const std::string& path) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), path,
                               [](const Entry& e, const std::string& p) {
                                   return e.first < p;
                               });
    if (it == entries_.end() || it->first != path) {
        throw LayoutError("no parameter at path '" + path + "'");
    }
    return it->second;
}

Tensor& ParamTree::at(const std::string& path) {
    return const_cast<Tensor&>(static_cast<const ParamTree*>(this)->at(path));
}

bool ParamTree::contains(const std::string& path) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), path,
                               [](const Entry& e, const std::string& p) {
                                   return e.first < p;
                               });
    return it != entries_.end() && it->first == path;
}

std::size_t ParamTree::value_count() const {
    std::size_t n = 0;
    for (const auto& [path, tensor] : entries_) n += tensor.size();
    return n;
}

ParamTree::Layout ParamTree::layout() const {
    Layout out;
    out.reserve(entries_.size());
    for (const auto& [path, tensor] : entries_) out.push_back({path, tensor.shape()});
    return out;
}

void ParamTree::require_same_layout(const ParamTree& other, const char* context) const {
    if (entries_.size() != other.entries_.size()) {
        throw LayoutError(std::string(context) + ": layouts differ, " +
                          std::to_string(entries_.size()) + " vs " +
                          std::to_string(other.entries_.size()) + " entries");
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first != other.entries_[i].first) {
            throw LayoutError(std::string(context) + ": path mismatch at entry " +
                              std::to_string(i) + ": '" + entries_[i].first + "' vs '" +
                              other.entries_[i].first + "'");
        }
        if (!entries_[i].second.same_shape(other.entries_[i].second)) {
            throw LayoutError(std::string(context) + ": shape mismatch at '" +
                              entries_[i].first + "': " + entries_[i].second.shape_str() +
                              " vs " + other.entries_[i].second.shape_str());
        }
    }
}

Tensor ParamTree::flatten() const {
    std::vector<double> flat;
    flat.reserve(value_count());
    for (const auto& [path, tensor] : entries_) {
        flat.insert(flat.end(), tensor.data().begin(), tensor.data().end());
    }
    const std::size_t n = flat.size();
    return Tensor({1, n}, std::move(flat));
}

ParamTree ParamTree::unflatten(const Layout& layout, const Tensor& flat) {
    std::size_t expected = 0;
    for (const auto& entry : layout) {
        std::size_t n = 1;
        for (std::size_t d : entry.shape) n *= d;
        expected += n;
    }
    if (flat.size() != expected) {
        throw LayoutError("unflatten: vector length " + std::to_string(flat.size()) +
                          " does not match layout size " + std::to_string(expected));
    }
    ParamTree tree;
    std::size_t offset = 0;
    for (const auto& entry : layout) {
        std::size_t n = 1;
        for (std::size_t d : entry.shape) n *= d;
        std::vector<double> values(flat.data().begin() + offset,
                                   flat.data().begin() + offset + n);
        tree.set(entry.path, Tensor(entry.shape, std::move(values)));
        offset += n;
    }
    return tree;
}

ParamTree ParamTree::zeros_like(const ParamTree& other) {
    ParamTree tree;
    for (const auto& [path, tensor] : other) tree.set(path, Tensor(tensor.shape()));
    return tree;
}

}  // namespace fedload
