#pragma once

#include <string>
#include <vector>

#include "strokesig/shap.hpp"

namespace strokesig {

// Static SVG reports; numbers behind each figure are also emitted as JSON by
// the pipeline.
void render_roc_svg(const std::vector<double>& scores,
                    const std::vector<int>& labels, double auc,
                    const std::string& path);

void render_waterfall_svg(const Waterfall& wf, const std::string& path);

void render_signature_svg(const SignatureDescription& sig,
                          const std::string& path);

}  // namespace strokesig
