// Minimal external decision process used by the adapter tests. Proposes a
// click on the first control of the current screen, scores 0.25 for text and
// 0.75 otherwise. "--garbage" answers every request with an unparseable line.

#include <iostream>
#include <string>

#include "json.hpp"

int main(int argc, char** argv) {
  const bool garbage = argc > 1 && std::string(argv[1]) == "--garbage";
  std::string line;
  while (std::getline(std::cin, line)) {
    if (garbage) {
      std::cout << "not json" << std::endl;
      continue;
    }
    const auto req = nlohmann::json::parse(line);
    nlohmann::json resp{{"id", req["id"]}};
    const auto& params = req["params"];
    if (req["method"] == "propose") {
      const auto& controls = params["state"]["current_snapshot"]["controls"];
      if (controls.empty()) {
        resp["result"] = {{"abstain", "empty screen"}};
      } else {
        resp["result"] = {{"action",
                           {{"action_type", "click_control"},
                            {"target_control_id", controls[0]["control_id"]},
                            {"actor", "policy"},
                            {"timestamp", 0}}},
                          {"confidence", 0.6}};
      }
    } else if (req["method"] == "score") {
      const bool text = params["proposal"]["action"]["action_type"] == "send_text_to_chat";
      resp["result"] = {{"value", text ? 0.25 : 0.75}};
    } else {
      resp["error"] = "unknown method";
    }
    std::cout << resp.dump() << std::endl;
  }
}
