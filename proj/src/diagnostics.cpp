#include "qtflow/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace qtflow {

void DiagnosticsRecord::validate() const {
    auto fin = [](double x) { return std::isfinite(x); };
    if (!fin(t) || !fin(dt) || !fin(energy) || !fin(measure) || !fin(mean) ||
        !fin(target_ratio) || !fin(x_t) || !fin(kappa) || !fin(residual) || !fin(max_u) ||
        !fin(min_u))
        throw std::runtime_error("diagnostics record contains non-finite values");
    if (x_t < 0.0) throw std::runtime_error("diagnostics record has x_t < 0");
    if (!(measure > 0.0)) throw std::runtime_error("diagnostics record has measure <= 0");
}

struct CsvSink::Impl {
    std::FILE* f = nullptr;
    bool header_written = false;
    ~Impl() {
        if (f) std::fclose(f);
    }
};

const char* CsvSink::header(Kind kind) {
    return kind == Kind::qflow ? "step,t,dt,energy,volume,qbar,x_t,cg_iters,residual"
                               : "step,t,dt,energy,area,tbar,x_T,cg_iters,residual";
}

CsvSink::CsvSink(const std::string& path, Kind kind)
    : path_(path), kind_(kind), impl_(std::make_unique<Impl>()) {
    impl_->f = std::fopen(path.c_str(), "wb");
    if (!impl_->f) throw std::runtime_error("cannot open diagnostics CSV: " + path);
}

CsvSink::~CsvSink() = default;
CsvSink::CsvSink(CsvSink&&) noexcept = default;
CsvSink& CsvSink::operator=(CsvSink&&) noexcept = default;

bool CsvSink::is_open() const { return impl_ && impl_->f; }

void CsvSink::emit(const DiagnosticsRecord& rec) {
    if (!is_open()) throw std::runtime_error("diagnostics sink is closed");
    rec.validate();
    std::FILE* f = impl_->f;
    if (!impl_->header_written) {
        if (std::fprintf(f, "%s\n", header(kind_)) < 0)
            throw std::runtime_error("diagnostics CSV write failed (partial output at " + path_ +
                                     ")");
        impl_->header_written = true;
    }
    const int rc = std::fprintf(f, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n", rec.step,
                                rec.t, rec.dt, rec.energy, rec.measure, rec.mean, rec.x_t,
                                rec.cg_iterations, rec.residual);
    if (rc < 0 || std::fflush(f) != 0)
        throw std::runtime_error("diagnostics CSV write failed (partial output at " + path_ + ")");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

InvariantReport invariant_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open diagnostics CSV: " + path);

    InvariantReport rep;
    std::string line;
    if (!std::getline(in, line)) {
        rep.parsed = true;
        rep.has_data = false;
        return rep;
    }
    const std::string qhdr = CsvSink::header(CsvSink::Kind::qflow);
    const std::string thdr = CsvSink::header(CsvSink::Kind::tflow);
    if (line == qhdr)
        rep.flow_kind = "qflow";
    else if (line == thdr)
        rep.flow_kind = "tflow";
    else
        throw std::runtime_error("malformed diagnostics CSV: unrecognized header");
    rep.parsed = true;

    double measure0 = 0.0, mean0 = 0.0, prev_energy = 0.0;
    bool first = true;
    bool monotone = true;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != 9)
            throw std::runtime_error("malformed diagnostics CSV at line " +
                                     std::to_string(lineno));
        double vals[9];
        for (int i = 0; i < 9; ++i) {
            try {
                std::size_t pos = 0;
                vals[i] = std::stod(cells[i], &pos);
                if (pos != cells[i].size()) throw std::invalid_argument("trailing junk");
            } catch (...) {
                throw std::runtime_error("malformed diagnostics CSV at line " +
                                         std::to_string(lineno));
            }
        }
        const double energy = vals[3], measure = vals[4], mean = vals[5], x = vals[6];
        if (first) {
            measure0 = measure;
            mean0 = mean;
            prev_energy = energy;
            rep.x_first = x;
            first = false;
        } else {
            rep.worst_energy_rise = std::max(rep.worst_energy_rise, energy - prev_energy);
            if (energy - prev_energy > 1e-10 * (1.0 + std::abs(prev_energy))) monotone = false;
            prev_energy = energy;
        }
        rep.measure_drift =
            std::max(rep.measure_drift, std::abs(measure - measure0) / std::abs(measure0));
        rep.mean_drift =
            std::max(rep.mean_drift, std::abs(mean - mean0) / (1.0 + std::abs(mean0)));
        rep.x_last = x;
        ++rep.rows;
    }
    if (rep.rows == 0) {
        rep.has_data = false;
        return rep;
    }
    rep.has_data = true;
    rep.measure_ok = rep.measure_drift <= 1e-6;
    rep.mean_ok = rep.mean_drift <= 1e-6;
    rep.energy_monotone = monotone;
    rep.x_decayed = rep.x_last <= rep.x_first || rep.x_last <= 1e-8;
    return rep;
}

std::string InvariantReport::text() const {
    std::ostringstream os;
    if (!has_data) {
        os << "invariant report: no data\n";
        return os.str();
    }
    auto line = [&](const char* name, bool ok, double measured, const char* tol) {
        os << (ok ? "[PASS] " : "[FAIL] ") << name << ": measured " << measured << " (tolerance "
           << tol << ")\n";
    };
    os << "invariant report (" << flow_kind << ", " << rows << " rows)\n";
    line(flow_kind == "qflow" ? "volume conservation" : "area conservation", measure_ok,
         measure_drift, "1e-6 relative");
    line(flow_kind == "qflow" ? "qbar conservation" : "tbar conservation", mean_ok, mean_drift,
         "1e-6");
    line("energy monotonicity", energy_monotone, worst_energy_rise, "1e-10*(1+|E|)");
    os << (x_decayed ? "[PASS] " : "[FAIL] ") << "x(t) decay: " << x_first << " -> " << x_last
       << "\n";
    return os.str();
}

// ---- PFLD snapshots -----------------------------------------------------

namespace {

constexpr char kMagic[4] = {'P', 'F', 'L', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f64(std::string& buf, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

void write_pfld(const std::string& path, const Grid& g, int face_code,
                const std::vector<double>& values) {
    std::string buf;
    buf.reserve(32 + values.size() * 8);
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(g.n1));
    put_u32(buf, static_cast<std::uint32_t>(g.n2));
    put_u32(buf, static_cast<std::uint32_t>(g.n3));
    put_u32(buf, static_cast<std::uint32_t>(g.n4));
    buf.push_back(static_cast<char>(face_code));
    buf.append(7, '\0');
    for (double v : values) put_f64(buf, v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open snapshot for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("snapshot write failed: " + path);
}

struct PfldData {
    Grid grid;
    int face_code = 0;
    std::vector<double> values;
};

// The header carries only the point counts; periodic side lengths come from
// the caller's geometry context (default 1).
PfldData read_pfld(const std::string& path, const Grid* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open snapshot: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 32) throw std::runtime_error("snapshot too small: " + path);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (std::memcmp(p, kMagic, 4) != 0)
        throw std::runtime_error("snapshot magic mismatch: " + path);
    if (get_u32(p + 4) != kVersion)
        throw std::runtime_error("snapshot version mismatch: " + path);

    PfldData d;
    const int n1 = static_cast<int>(get_u32(p + 8));
    const int n2 = static_cast<int>(get_u32(p + 12));
    const int n3 = static_cast<int>(get_u32(p + 16));
    const int n4 = static_cast<int>(get_u32(p + 20));
    d.face_code = p[24];
    if (expected) {
        if (expected->n1 != n1 || expected->n2 != n2 || expected->n3 != n3 || expected->n4 != n4)
            throw std::runtime_error("snapshot grid does not match the run grid: " + path);
        d.grid = *expected;
    } else {
        d.grid = build_grid(n1, n2, n3, n4, 1.0, 1.0, 1.0);
    }

    std::size_t count;
    switch (d.face_code) {
        case 0: count = d.grid.volume_points(); break;
        case 1:
        case 2: count = d.grid.face_points(); break;
        case 3: count = 2 * d.grid.face_points(); break;
        default: throw std::runtime_error("snapshot has invalid face code: " + path);
    }
    if (buf.size() != 32 + count * 8)
        throw std::runtime_error("snapshot size does not match its header: " + path);
    d.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) d.values[i] = get_f64(p + 32 + 8 * i);
    return d;
}

}  // namespace

void write_snapshot(const std::string& path, const ScalarField& f) {
    write_pfld(path, f.grid, 0, f.values);
}

void write_snapshot(const std::string& path, const BoundaryField& f) {
    const int code = f.face == Face::lower ? 1 : (f.face == Face::upper ? 2 : 3);
    write_pfld(path, f.grid, code, f.values);
}

ScalarField read_volume_snapshot(const std::string& path, const Grid* expected) {
    PfldData d = read_pfld(path, expected);
    if (d.face_code != 0)
        throw std::runtime_error("snapshot is a boundary field, volume expected: " + path);
    ScalarField f(d.grid);
    f.values = std::move(d.values);
    return f;
}

BoundaryField read_boundary_snapshot(const std::string& path, const Grid* expected) {
    PfldData d = read_pfld(path, expected);
    if (d.face_code == 0)
        throw std::runtime_error("snapshot is a volume field, boundary expected: " + path);
    const Face face = d.face_code == 1 ? Face::lower : (d.face_code == 2 ? Face::upper : Face::both);
    BoundaryField f(d.grid, face);
    f.values = std::move(d.values);
    return f;
}

int snapshot_face_code(const std::string& path) { return read_pfld(path, nullptr).face_code; }

}  // namespace qtflow
