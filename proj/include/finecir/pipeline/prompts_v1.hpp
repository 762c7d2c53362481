#pragma once

// Built-in copies of prompts/v1/*.txt. tests/test_prompts.cpp keeps the two in sync.

#include <array>
#include <string_view>

namespace finecir::pipeline::builtin {

struct PromptFile {
    std::string_view id;
    std::string_view text;
};

inline constexpr std::array<PromptFile, 6> kPromptsV1{{
    {"pair_check", R"txt(You are checking whether two images can form a composed image retrieval example.
The first image is the reference: <img1>
The second image is the target: <img2>

Answer each question with a single word, Yes or No, in order.
1. Are the contents of the two images related, ensuring a logical and meaningful modification from the reference to the target?
2. Can the reference image provide valuable information for retrieving the target image?
3. Are there sufficient modifiable aspects between the two images, and are these modifications feasible and meaningful for fine-grained modification?

Reply format: three answers separated by periods, for example "Yes. No. Yes.", then one line of rationale.
)txt"},
    {"fine_prompt", R"txt(Reference image: <img1>
Target image: <img2>
Checker evaluation: <eval>

Describe how to edit the reference image so that it becomes the target image.
If the evaluation has three Yes answers, cover every visible difference: objects, attributes, counts, spatial layout, background and viewpoint.
If the evaluation has two Yes answers, list only the differences you are certain of, focusing on visual characteristics.
Write short imperative sentences, one change per sentence. Do not describe content that both images share.
)txt"},
    {"fashion_addendum", R"txt(The images show garments. Attend to garment components such as neckline, straps, sleeves, hem length, closures and prints.
Treat the garment as a whole before listing component changes.
Compare the two garments directly and state each change relative to the reference garment.
)txt"},
    {"refine", R"txt(Reference image: <img1>
Modification text:
<text>

The sentences of the modification text are numbered from 1 in order.
List the numbers of sentences that mention content which cannot be grounded in the reference image or that contradict it.
Reply on one line as "REMOVE: 2,4" or "REMOVE: none".
)txt"},
    {"assess_refine", R"txt(Reference image: <img1>
Target image: <img2>
Modification text:
<text>

The text alone identifies the target image, so it repeats information that the reference image already provides.
Rewrite it so that it only states the changes, leaving the shared context to the reference image. Reply with the rewritten text only.
)txt"},
    {"compress", R"txt(Shorten the following modification text to at most <limit> tokens.
Keep every change it describes. Remove repeated phrases, filler prepositions and explanations of intent.
Reply with the shortened text only.

<text>
)txt"},
}};

}  // namespace finecir::pipeline::builtin
