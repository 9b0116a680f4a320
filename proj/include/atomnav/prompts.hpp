#pragma once

// VLM prompt templates. These strings are part of the wire contract with
// replay stores: whitespace, including trailing spaces, is load-bearing.
// Do not reformat.

namespace atomnav {

// {symbolDictionary} is replaced by the canonical JSON of the symbol
// dictionary labels.
inline constexpr const char* kInContextPromptTemplate =
    "The symbols in the image are associated to their semantic meaning "
    "through their index. This following dictionary {symbolDictionary} "
    "includes their semantic meaning.";

inline constexpr const char* kParsePrompt =
    "Break down the directions sign you see in the image. If the text is the "
    "illegible/unreadable, do not consider it. \n"
    "Return your answer in the form \n"
    "{\n"
    "    'forward': [content], \n"
    "    'backwards': [content],\n"
    "    'left': [content], \n"
    "    'right': [content],\n"
    "    'forward-left': [content], \n"
    "    'forward-right': [content], \n"
    "    'backward-right': [content], \n"
    "    'backward-left': [content], \n"
    "    'forward-then-left': [content], \n"
    "    'forward-then-right': [content], \n"
    "    'left-then-forward': [content], \n"
    "    'right-then-forward': [content], \n"
    "    'up-stairs' : [content], \n"
    "    'down-stairs' : [content], \n"
    "    'down-escalator': [content], \n"
    "    'up-escalator': [content],\n"
    "    'locational': [content]\n"
    "}.                           \n"
    "Return only the dict (no comments or formatting).";

inline constexpr const char* kParsePromptPrefix =
    "Break down the directions sign";

// {location} is the queried location phrase; {parsing} is the matched cue
// serialized in the same dict form the parse prompt requests.
inline constexpr const char* kGroundPromptTemplate =
    "Select a letter in a circle or a object name in a bounding box in this "
    "image that is potentially closest to {location}, given the following "
    "list that consist of direction and places: {parsing}. Remember that "
    "lifts, stairs and escalators allow you do go up and down. Reason "
    "carefully about the spatial layout and the affordance of the objects. "
    "Return the answer based on the example format: [A] / [Door].";

inline constexpr const char* kGroundPromptPrefix =
    "Select a letter in a circle";

}  // namespace atomnav
