#include "symdec/sapg.hpp"

namespace symdec::sapg {

Vocabulary default_vocabulary() {
  return Vocabulary({
    "man", "pole", "stand", "white", "building", "sit", "table", "floor", "sky", "person", "red",
    "street sign", "food", "traffic sign", "road", "clock", "plate", "green", "attach", "catch", "sign",
    "park", "peak", "street corner", "tree", "platter", "woman", "car", "stop sign", "blue", "tower", "black",
    "play", "lush", "blanket", "yellow", "road sign", "stool", "bell tower", "grass", "curb", "tray", "field",
    "walk", "stare", "cloudy", "pavement", "ball", "child", "dinning table", "photo", "water", "boy", "ride",
    "spire", "animal", "girl", "drive", "brown", "fill", "vegetable", "cat", "fly", "footstall", "room",
    "hand", "sea", "lay", "cup", "container", "pillar", "flower", "city", "beverage", "motorcycle", "grassy",
    "bowl", "license plate", "wear", "fruit", "shirt", "countertop", "dog", "snow", "plane", "lamp", "rail",
    "motorbike", "home appliance", "toy", "stone building", "electronic", "bus", "chair", "swinge", "pizza",
    "racket", "tennis racket", "rural", "vase"
  });
}

}  // namespace symdec::sapg
