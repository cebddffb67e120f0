#ifndef NCT_SERIALIZE_HPP
#define NCT_SERIALIZE_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "nct/flow.hpp"
#include "nct/heisenberg.hpp"
#include "nct/instanton.hpp"
#include "nct/sigma_model.hpp"
#include "nct/twisted_series.hpp"

namespace nct {

using ojson = nlohmann::ordered_json;

inline constexpr const char* kLibraryVersion = "0.1.0";

// --- twisted-series/1 ---------------------------------------------------------

/// {"format":"twisted-series/1","theta":...,"half_width":...,
///  "coeffs":[[m,n,re,im],...]} with coefficients sorted by (m, n).
ojson series_to_json(const TwistedSeries& a);
TwistedSeries series_from_json(const ojson& j);  // throws ParameterError

// --- gauss-section/1 ----------------------------------------------------------

ojson geometry_to_json(const ModuleGeometry& g);
ModuleGeometry geometry_from_json(const ojson& j);

/// Per-component term arrays [[poly coeffs as [re,im]...], alpha_exp, beta_exp].
ojson section_to_json(const GaussPolySection& s);
GaussPolySection section_from_json(const ojson& j);

// --- reports ------------------------------------------------------------------

ojson report_to_json(const ProjectionReport& r);
ProjectionReport report_from_json(const ojson& j);

/// CSV with one row per report; amplitude/lambda columns prepended when the
/// corresponding vectors are given (scan tables).
std::string reports_to_csv(const std::vector<ProjectionReport>& reports);

// --- flow traces ---------------------------------------------------------------

std::string flow_trace_to_csv(const FlowTrace& t);
ojson flow_trace_summary(const FlowTrace& t);

// --- scan tables ----------------------------------------------------------------

/// Columns: lambda_re, lambda_im, a<k>_re, a<k>_im ..., trace, action, charge,
/// bp_gap, sd_residual, asd_residual, idempotency.
std::string scan_to_csv(const std::vector<ScanRow>& rows);
ojson scan_to_json(const std::vector<ScanRow>& rows);

// --- files ----------------------------------------------------------------------

/// Full-precision text form of a double (shortest round-trip).
std::string dump_double(double v);

/// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(std::string_view data);

/// Write via a temporary file in the same directory, then rename.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace nct

#endif
