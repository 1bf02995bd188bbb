#pragma once

#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mtlsi/error.hpp"
#include "mtlsi/metrics/evaluate.hpp"

namespace mtlsi::train {

struct grid_cell {
    double lr = 0.0;
    std::size_t batch_size = 0;
    std::uint64_t seed = 0;
    std::optional<double> dev_ppmc; ///< unset when the run failed or the score was undefined
    bool failed = false;
    std::string message;
};

struct grid_result {
    std::vector<grid_cell> cells;
    std::optional<std::size_t> best; ///< index into cells
};

/// Trains one model for (lr, batch_size, seed) and returns its dev-set
/// average PPMC.
using cell_runner = std::function<std::optional<double>(double lr, std::size_t batch_size, std::uint64_t seed)>;

inline const std::vector<double>& default_lr_grid()
{
    static const std::vector<double> grid{1e-3, 3e-4, 1e-4};
    return grid;
}

inline const std::vector<std::size_t>& default_batch_grid()
{
    static const std::vector<std::size_t> grid{16, 32, 64, 128};
    return grid;
}

/// Runs every (lr, batch) cell in row-major order with seed + cell index.
/// Errors inside a cell mark it failed; the best cell maximizes dev PPMC,
/// with ties going to the larger batch and then the larger lr.
inline grid_result grid_search(const cell_runner& run, std::uint64_t seed,
                               const std::vector<double>& lr_grid = default_lr_grid(),
                               const std::vector<std::size_t>& batch_grid = default_batch_grid())
{
    if (lr_grid.empty() || batch_grid.empty()) {
        throw error(errc::invalid_config, "grid search needs at least one lr and one batch size");
    }
    grid_result out;
    for (double lr : lr_grid) {
        for (std::size_t bs : batch_grid) {
            grid_cell cell{lr, bs, seed + out.cells.size(), std::nullopt, false, {}};
            try {
                cell.dev_ppmc = run(lr, bs, cell.seed);
                if (!cell.dev_ppmc) {
                    cell.failed = true;
                    cell.message = "dev PPMC undefined";
                }
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.message = e.what();
            }
            out.cells.push_back(cell);
        }
    }
    for (std::size_t i = 0; i < out.cells.size(); ++i) {
        const auto& c = out.cells[i];
        if (c.failed) {
            continue;
        }
        if (!out.best) {
            out.best = i;
            continue;
        }
        const auto& b = out.cells[*out.best];
        const bool better = *c.dev_ppmc > *b.dev_ppmc
                            || (*c.dev_ppmc == *b.dev_ppmc
                                && (c.batch_size > b.batch_size || (c.batch_size == b.batch_size && c.lr > b.lr)));
        if (better) {
            out.best = i;
        }
    }
    return out;
}

inline std::string grid_table_csv(const grid_result& g)
{
    std::ostringstream os;
    os << "lr,batch_size,seed,dev_ppmc,status,best\n";
    for (std::size_t i = 0; i < g.cells.size(); ++i) {
        const auto& c = g.cells[i];
        os << metrics::csv_number(c.lr) << "," << c.batch_size << "," << c.seed << "," << metrics::csv_number(c.dev_ppmc)
           << "," << (c.failed ? "failed" : "ok") << "," << (g.best == i ? 1 : 0) << "\n";
    }
    return os.str();
}

inline std::string grid_table_text(const grid_result& g)
{
    std::ostringstream os;
    os << "      lr  batch   dev PPMC  status\n";
    for (std::size_t i = 0; i < g.cells.size(); ++i) {
        const auto& c = g.cells[i];
        char buf[128];
        std::snprintf(buf, sizeof buf, "%8.0e  %5zu  %9s  %s%s\n", c.lr, c.batch_size, metrics::fixed(c.dev_ppmc).c_str(),
                      c.failed ? "failed" : "ok", g.best == i ? "  <- best" : "");
        os << buf;
    }
    return os.str();
}

} // namespace mtlsi::train
