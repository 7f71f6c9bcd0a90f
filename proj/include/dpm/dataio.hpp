#pragma once

#include <filesystem>
#include <span>

#include "dpm/core.hpp"
#include "dpm/dataset.hpp"

namespace dpm {

/// The 32 points of {(0,1),(1,0)}^5 in lexicographic order.
Dataset gen_synthetic();

/// IDX image file (magic 0x00000803, unsigned bytes). Pixels are scaled to
/// [0,1] and flattened row-major; the shape hint is set.
Dataset read_idx(const std::filesystem::path& path);

/// Entries >= threshold become 1. Refuses data that is already binary.
Dataset binarize(const Dataset& data, double threshold = 0.5);

/// One P1/P2/P4/P5 image as a single-row dataset. PBM gives binary data with
/// black (bit 1) mapped to 1; PGM gives gray levels divided by maxval.
Dataset read_netpbm(const std::filesystem::path& path);

/// Every *.pbm/*.pgm/*.pnm file in `dir`, sorted by file name. All images
/// must share one size. A mix of PBM and PGM yields continuous data.
Dataset read_netpbm_dir(const std::filesystem::path& dir);

/// Binary PGM, maxval 255, pixel = round(255 * clamp(value, 0, 1)).
void write_pgm(std::span<const double> pixels, ImageShape shape, const std::filesystem::path& path);

/// Comma-separated numbers; a non-numeric first line is taken as a header.
Dataset read_csv(const std::filesystem::path& path, DataKind kind);
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// "DPM1" model file. Layout (little-endian):
///   magic[4] kind:u8 K:u32 D:u32 mu:f64[K*D] [var:f64[K*D]] expertise:f64[K*D]
void save_model(const ExpertBank& bank, const std::filesystem::path& path);
ExpertBank load_model(const std::filesystem::path& path);

/// Writes expert_<k>_mu.pgm (opinion 0 -> white, 1 -> black) and
/// expert_<k>_e.pgm (log2 expertise, min-max scaled over the whole bank,
/// brighter = more expert) into `out_dir`.
void export_template_grid(const ExpertBank& bank, ImageShape shape, const std::filesystem::path& out_dir);

}  // namespace dpm
