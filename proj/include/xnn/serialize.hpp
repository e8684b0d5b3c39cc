#pragma once

#include <optional>
#include <string>

#include "xnn/data.hpp"
#include "xnn/model.hpp"

namespace xnn {

struct LoadedModel {
    XnnModel model;
    Hyperparams hp;
    std::optional<MinMaxScaling> scaling;
};

// "xnn-model/1" document. Doubles print in shortest round-trip form, so
// serialize -> parse -> serialize is byte-identical.
std::string model_to_json(const XnnModel& model, const Hyperparams& hp,
                          const std::optional<MinMaxScaling>& scaling);
LoadedModel model_from_json(const std::string& text);

void save_model(const std::string& path, const XnnModel& model,
                const Hyperparams& hp,
                const std::optional<MinMaxScaling>& scaling);
LoadedModel load_model(const std::string& path);

}  // namespace xnn
