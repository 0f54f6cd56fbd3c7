#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mstn/common.hpp"

namespace mstn {

// Maps template ids (source pieces) to structure-table rows. Augmented copies
// resolve to their source's row through the template map, so all of them
// share one e_d vector.
class TemplateRegistry {
  public:
    int add(const std::string& id) {
        auto it = rows_.find(id);
        if (it != rows_.end()) return it->second;
        const int row = static_cast<int>(names_.size());
        names_.push_back(id);
        rows_[id] = row;
        return row;
    }

    int row(const std::string& id) const {
        auto it = rows_.find(id);
        if (it == rows_.end()) throw UnknownTemplate(id);
        return it->second;
    }

    bool contains(const std::string& id) const { return rows_.count(id) != 0; }
    const std::string& name(int row) const { return names_.at(static_cast<std::size_t>(row)); }
    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }

    nlohmann::json to_json() const { return names_; }

    static TemplateRegistry from_json(const nlohmann::json& j) {
        TemplateRegistry r;
        for (const auto& name : j) r.add(name.get<std::string>());
        return r;
    }

  private:
    std::vector<std::string> names_;
    std::map<std::string, int> rows_;
};

}  // namespace mstn
