#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "qtflow/field.hpp"

namespace qtflow {

// One accepted step.  `measure` is the conformal volume for the Q-flow and
// the boundary area for the T-flow; `target_ratio` is Qbar/Fbar resp.
// Tbar/Sbar; `residual` is the linear-solver relative residual (Q-flow) or
// the interior extension residual (T-flow).
struct DiagnosticsRecord {
    long step = 0;
    double t = 0.0;
    double dt = 0.0;
    double energy = 0.0;
    double measure = 0.0;
    double mean = 0.0;          // qbar or tbar
    double target_ratio = 0.0;
    double x_t = 0.0;
    double kappa = 0.0;
    int cg_iterations = 0;
    double residual = 0.0;
    double max_u = 0.0;
    double min_u = 0.0;

    // Emission invariants: everything finite, x_t >= 0, measure > 0.
    void validate() const;
};

// CSV sink with a fixed column set; header written once, flush per row.
// I/O failure raises std::runtime_error so the run can abort with a
// partial-output notice.
class CsvSink {
public:
    enum class Kind { qflow, tflow };

    CsvSink() = default;
    CsvSink(const std::string& path, Kind kind);
    ~CsvSink();

    CsvSink(CsvSink&&) noexcept;
    CsvSink& operator=(CsvSink&&) noexcept;
    CsvSink(const CsvSink&) = delete;
    CsvSink& operator=(const CsvSink&) = delete;

    bool is_open() const;
    void emit(const DiagnosticsRecord& rec);
    const std::string& path() const { return path_; }

    static const char* header(Kind kind);

private:
    std::string path_;
    Kind kind_ = Kind::qflow;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Consolidated invariant report over an emitted diagnostics CSV.
struct InvariantReport {
    bool parsed = false;
    bool has_data = false;
    std::string flow_kind;
    long rows = 0;

    double measure_drift = 0.0;   // max relative deviation from row 0
    double mean_drift = 0.0;      // max |mean - mean0| / (1 + |mean0|)
    double worst_energy_rise = 0.0;
    double x_first = 0.0, x_last = 0.0;

    bool measure_ok = false;
    bool mean_ok = false;
    bool energy_monotone = false;
    bool x_decayed = false;

    bool all_ok() const { return measure_ok && mean_ok && energy_monotone && x_decayed; }
    std::string text() const;
};

// Parses `path` and evaluates the conservation/monotonicity invariants.
// Tolerances: measure and mean drift 1e-6 (relative), energy slack
// 1e-10 (1 + |E|).  Throws std::runtime_error on malformed rows.
InvariantReport invariant_report(const std::string& path);

// PFLD binary snapshot format: 32-byte header (magic "PFLD", version,
// n1..n4, face code, padding), then little-endian f64 values in grid order.
// Readers take the run grid for the periodic side lengths (the header holds
// point counts only); pass nullptr for unit lengths.
void write_snapshot(const std::string& path, const ScalarField& f);
void write_snapshot(const std::string& path, const BoundaryField& f);
ScalarField read_volume_snapshot(const std::string& path, const Grid* expected = nullptr);
BoundaryField read_boundary_snapshot(const std::string& path, const Grid* expected = nullptr);
// 0 = volume field, 1/2/3 = lower/upper/both boundary field.
int snapshot_face_code(const std::string& path);

}  // namespace qtflow
