#pragma once

// Plain-text file formats: events, counts, spectra, covariance and response
// matrices. All are comma-separated with a header row and round-trip exactly.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flavent/analysis.hpp"
#include "flavent/event.hpp"
#include "flavent/unfold.hpp"

namespace flavent {

inline constexpr const char* kEventHeader =
    "t1_ps,t2_ps,dt_true_ps,cls_true,dz_rec_um,dt_rec_ps,cls_assigned,category,stream,index";

void write_events(std::ostream& out, std::span<const EventRecord> events);
/// Malformed rows raise ValidationError naming the source and data row index.
std::vector<EventRecord> read_events(std::istream& in, const std::string& source = "<events>");

void write_counts(std::ostream& out, const BinnedCounts& c);
BinnedCounts read_counts(std::istream& in, const std::string& source = "<counts>");

/// bin,lo_ps,hi_ps,a,stat,syst_total, then one column per systematic source.
void write_spectrum(std::ostream& out, const AsymmetrySpectrum& s);
/// syst_total is taken from the file, not recomputed from the sources.
AsymmetrySpectrum read_spectrum(std::istream& in, const std::string& source = "<spectrum>");

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(std::istream& in, const std::string& source = "<matrix>");

/// Both classes in one file, each block led by class, binning, binning_hash,
/// truth_totals and overflow rows.
void write_responses(std::ostream& out, const ResponseMatrix& of, const ResponseMatrix& sf);
std::pair<ResponseMatrix, ResponseMatrix> read_responses(std::istream& in,
                                                         const std::string& source = "<response>");

/// Whole-file helpers; ValidationError if the file cannot be opened.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace flavent
