// Policy-model contract shared by the SSN network and the baselines: a raster
// in, a horizon x (x, y, yaw) trajectory out, plus named parameters for the
// optimizer and checkpoints.
#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "ssn/layers.hpp"
#include "ssn/tensor.hpp"

namespace ssn {

class Model {
public:
    virtual ~Model() = default;

    /// raster [C x H x W] -> trajectory [horizon x 3] in the ego frame.
    virtual Tensor forward(const Tensor& raster) const = 0;

    virtual ParamMap parameters() = 0;
    virtual nlohmann::json config_json() const = 0;
    virtual int horizon() const = 0;
    virtual std::string kind() const = 0;

    std::int64_t parameter_count() {
        std::int64_t n = 0;
        for (auto& [name, t] : parameters()) n += t->numel();
        return n;
    }
};

}  // namespace ssn
