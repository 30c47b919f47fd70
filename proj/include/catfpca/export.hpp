#ifndef CATFPCA_EXPORT_HPP
#define CATFPCA_EXPORT_HPP

#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "catfpca/mfpca.hpp"

namespace catfpca {

// Eigenvalues, proportions, importance and weights of the first k components.
nlohmann::json result_to_json(const MfpcaResult& result, int k, const nlohmann::json& config);

// subject,condition,r,value
void write_scores_csv(std::ostream& out, const MfpcaResult& result, int k);
// state,r,t_left,t_right,value
void write_eigenfunctions_csv(std::ostream& out, const MfpcaResult& result, int k);
// state,r,t_left,t_right,lower,mean,upper with lower/upper = p -/+ c sqrt(lambda_r) phi_rj
void write_bands_csv(std::ostream& out, const MfpcaResult& result, int k, double c);

/// Plain-text table of variance proportions and per-state importance.
std::string summary_table(const MfpcaResult& result, int k, int top_states = 4);

}  // namespace catfpca

#endif  // CATFPCA_EXPORT_HPP
