#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace sitewatch {

using ScoreMatrix = std::vector<std::vector<double>>;
using Assignment = std::vector<std::pair<std::size_t, std::size_t>>;  // (row, col), sorted by row

/// Globally greedy one-to-one assignment by descending score. Pairs scoring
/// below `threshold` are never assigned. Ties break on the lower row key
/// (row index when `row_keys` is empty), then the lower column index.
inline Assignment greedy_assignment(const ScoreMatrix& scores, double threshold,
                                    std::span<const std::uint64_t> row_keys = {}) {
    struct Cell {
        double score;
        std::uint64_t key;
        std::size_t row;
        std::size_t col;
    };
    std::vector<Cell> cells;
    std::size_t cols = 0;
    for (std::size_t r = 0; r < scores.size(); ++r) {
        cols = std::max(cols, scores[r].size());
        const std::uint64_t key = row_keys.empty() ? r : row_keys[r];
        for (std::size_t c = 0; c < scores[r].size(); ++c)
            if (scores[r][c] >= threshold) cells.push_back({scores[r][c], key, r, c});
    }
    std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.key != b.key) return a.key < b.key;
        return a.col < b.col;
    });
    std::vector<bool> row_used(scores.size(), false);
    std::vector<bool> col_used(cols, false);
    Assignment out;
    for (const auto& c : cells) {
        if (row_used[c.row] || col_used[c.col]) continue;
        row_used[c.row] = col_used[c.col] = true;
        out.emplace_back(c.row, c.col);
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Extends an assignment to maximum cardinality over the eligible pairs
/// (score >= threshold) with augmenting paths. An assignment that is already
/// maximum comes back unchanged.
inline Assignment augment_to_maximum(const ScoreMatrix& scores, double threshold, Assignment start) {
    const std::size_t rows = scores.size();
    std::size_t cols = 0;
    for (const auto& r : scores) cols = std::max(cols, r.size());

    std::vector<std::optional<std::size_t>> row_match(rows), col_match(cols);
    for (const auto& [r, c] : start) {
        row_match[r] = c;
        col_match[c] = r;
    }
    auto eligible = [&](std::size_t r, std::size_t c) { return c < scores[r].size() && scores[r][c] >= threshold; };

    std::vector<bool> visited;
    std::function<bool(std::size_t)> try_row = [&](std::size_t r) -> bool {
        for (std::size_t c = 0; c < cols; ++c) {
            if (!eligible(r, c) || visited[c]) continue;
            visited[c] = true;
            if (!col_match[c] || try_row(*col_match[c])) {
                row_match[r] = c;
                col_match[c] = r;
                return true;
            }
        }
        return false;
    };
    for (std::size_t r = 0; r < rows; ++r) {
        if (row_match[r]) continue;
        visited.assign(cols, false);
        try_row(r);
    }
    Assignment out;
    for (std::size_t r = 0; r < rows; ++r)
        if (row_match[r]) out.emplace_back(r, *row_match[r]);
    return out;
}

}  // namespace sitewatch
