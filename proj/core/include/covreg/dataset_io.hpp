#ifndef COVREG_DATASET_IO_HPP
#define COVREG_DATASET_IO_HPP

#include <string>
#include <vector>

#include "covreg/simulate.hpp"

namespace covreg {
namespace io {

/// Dataset JSON document, schema 1:
///   {"schema": 1, "family": "linear"|"network_ar", "n": .., "p": .., "K": ..,
///    "Y": n x p,
///    "X": linear: n x K x p x p, or n x (K-1) x p with "outer_product": true;
///         network_ar: n x p x p}
/// Matrices must be symmetric within 1e-9 and are symmetrized on load (a
/// warning is recorded).
struct LoadedDataset {
  Dataset data;
  std::vector<std::string> warnings;
};

LoadedDataset dataset_from_json(const std::string& text);
LoadedDataset load_dataset(const std::string& path);

/// Canonical serialization: loading then re-saving is a fixed point.
std::string dataset_to_json(const Dataset& data);
void save_dataset(const Dataset& data, const std::string& path);

/// Full study report with config echo.
std::string report_to_json(const SimReport& report);
std::string metrics_csv(const SimReport& report);
std::string criteria_csv(const SimReport& report);

/// Writes report.json, metrics.csv, and criteria.csv into `dir`.
void write_report(const SimReport& report, const std::string& dir);

/// Study config as a JSON document mirroring SimConfig (the TOML mirror is
/// handled by the command line layer).
SimConfig sim_config_from_json(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace io
}  // namespace covreg

#endif  // COVREG_DATASET_IO_HPP
