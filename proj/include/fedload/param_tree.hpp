#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fedload/tensor.hpp"

namespace fedload {

// Ordered mapping of parameter path -> tensor, kept sorted lexicographically
// by path. This is the unit exchanged between clients and the aggregation
// server; its flat vector form is the wire format.
class ParamTree {
public:
    using Entry = std::pair<std::string, Tensor>;

    struct LayoutEntry {
        std::string path;
        std::vector<std::size_t> shape;
        bool operator==(const LayoutEntry&) const = default;
    };
    using Layout = std::vector<LayoutEntry>;

    ParamTree() = default;

    // Inserts or replaces; keeps entries sorted.
    void set(const std::string& path, Tensor value);

    const Tensor& at(const std::string& path) const;
    Tensor& at(const std::string& path);
    bool contains(const std::string& path) const;

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t value_count() const;

    std::vector<Entry>::const_iterator begin() const { return entries_.begin(); }
    std::vector<Entry>::const_iterator end() const { return entries_.end(); }
    std::vector<Entry>::iterator begin() { return entries_.begin(); }
    std::vector<Entry>::iterator end() { return entries_.end(); }

    Layout layout() const;
    void require_same_layout(const ParamTree& other, const char* context) const;

    // Concatenates all tensors in path order into a row vector [1 x N].
    Tensor flatten() const;
    static ParamTree unflatten(const Layout& layout, const Tensor& flat);

    static ParamTree zeros_like(const ParamTree& other);

    bool operator==(const ParamTree& other) const { return entries_ == other.entries_; }

private:
    std::vector<Entry> entries_;
};

}  // namespace fedload
