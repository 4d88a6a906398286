#pragma once

// Fixed instruction texts shared by the evolution operator, the fine-tuning
// dataset writer and the negative-prompt generator.

#include <string_view>

namespace pav::templates {

inline constexpr std::string_view kEvolveInstructionId = "evolve-v1";
inline constexpr std::string_view kSftInstructionId = "sft-v1";
inline constexpr std::string_view kNegativeInstructionId = "negative-v1";

inline constexpr std::string_view kEvolveIntro =
    "You need to refine user's input prompt. The user's input prompt is used for video generation "
    "task. You need to refine the user's prompt to make it more suitable for the task. Here are some "
    "examples of refined prompts:";

inline constexpr std::string_view kEvolveExamples[] = {
    "a close-up shot of a woman standing in a room with a white wall and a plant on the left side. "
    "the woman has curly hair and is wearing a green tank top. she is looking to the side with a "
    "neutral expression on her face. the lighting in the room is soft and appears to be natural, "
    "coming from the left side of the frame. the focus is on the woman, with the background being "
    "out of focus. there are no texts or other objects in the video. the style of the video is a "
    "simple, candid portrait with a shallow depth of field.",
    "a serene scene of a pond filled with water lilies. the water is a deep blue, providing a "
    "striking contrast to the pink and white flowers that float on its surface. the flowers, in full "
    "bloom, are the main focus of the video. they are scattered across the pond, with some closer to "
    "the camera and others further away, creating a sense of depth. the pond is surrounded by lush "
    "greenery, adding a touch of nature to the scene. the video is taken from a low angle, looking up "
    "at the flowers, which gives a unique perspective and emphasizes their beauty. the overall "
    "composition of the video suggests a peaceful and tranquil setting, likely a garden or a park.",
    "a serene scene in a park. the sun is shining brightly, casting a warm glow on the lush green "
    "trees and the grassy field. the camera is positioned low, looking up at the towering trees, "
    "which are the main focus of the image. the trees are dense and full of leaves, creating a canopy "
    "of green that fills the frame. the sunlight filters through the leaves, creating a beautiful "
    "pattern of light and shadow on the ground. the overall atmosphere of the video is peaceful and "
    "tranquil, evoking a sense of calm and relaxation.",
    "a scene where a person is examining a dog. the person is wearing a blue shirt with the word "
    "\"volunteer\" printed on it. the dog is lying on its side, and the person is using a stethoscope "
    "to listen to the dog's heartbeat. the dog appears to be a golden retriever and is looking "
    "directly at the camera. the background is blurred, but it seems to be an indoor setting with a "
    "white wall. the person's focus is on the dog, and they seem to be checking its health. the "
    "dog's expression is calm, and it seems to be comfortable with the person's touch. the overall "
    "atmosphere of the video is calm and professional.",
};

inline constexpr std::string_view kEvolveGuidance =
    "The refined prompt should pay attention to all objects in the video. The description should be "
    "useful for AI to re-generate the video. The description should be no more than six sentences. "
    "The refined prompt should be in English.";

// Used verbatim when the metric set is the seven core metrics.
inline constexpr std::string_view kEvolveCoreMetricsSentence =
    "User will provide an original prompt and your revised prompts, with their generated videos' "
    "scores (Visual Quality, Temporal Consistency, Dynamic Degree, Text Video Alignment, Factual "
    "Consistency, Aesthetic score, Image quality, 7 dimensions termed as VQ, TC, DD, TVA, FC, AES, "
    "MPS), and you need to give an improved prompt according to previous prompts and their scores on "
    "different dimensions.";

inline constexpr std::string_view kEvolveIndexSentence =
    "Each prompt is tagged with an index, and the sentence labeled as 0 is the initial prompt. Each "
    "prompt is followed by ";  // + "(VQ, TC, ...)"

inline constexpr std::string_view kEvolveLearnSentence =
    " scores. You need build upon the most successful prompts and learn from the high-scoring "
    "prompts. You need to observe the scores of each prompt in different aspects, learn from the "
    "experiences of previous prompts, and combine their strengths to generate better prompts.";

inline constexpr std::string_view kEvolveSemanticSentence =
    "The new prompts should keep the same semantic meaning with original prompt, should not add extra "
    "scene changing or too many actions, which is hard for video generation.";

// "Generate " + N + kEvolveGenerateTail
inline constexpr std::string_view kEvolveGenerateTail =
    " paraphrases of the initial prompt which keep the semantic meaning and that have higher scores "
    "than all the prompts above. Respond with each new prompt in between <PROMPT> and </PROMPT>, "
    "e.g., <PROMPT>paraphrase 1</PROMPT>.";

inline constexpr std::string_view kPromptOpen = "<PROMPT>";
inline constexpr std::string_view kPromptClose = "</PROMPT>";

// Fine-tuning dialog: user content = kSftPrefix + source + kSftSuffix.
inline constexpr std::string_view kSftPrefix =
    "You need to refine user's input prompt. The user's input prompt is used for video generation "
    "task. You need to refine the user's prompt to make it more suitable for the task. You will be "
    "prompted by people looking to create detailed, amazing videos. The way to accomplish this is to "
    "take their short prompts and make them extremely detailed and descriptive. You will only ever "
    "output a single video description per user request. You should refactor the entire description "
    "to integrate the suggestions. Original prompt:\n";
inline constexpr std::string_view kSftSuffix = "\n New prompt:\n";

inline constexpr std::string_view kFixedNegativePrompt =
    "The video is not of a high quality, it has a low resolution, and the audio quality is not "
    "clear. Strange motion trajectory, a poor composition and deformed video, low resolution, "
    "duplicate and ugly, strange body structure, long and strange neck, bad teeth, bad eyes, bad "
    "limbs, bad hands, rotating camera, blurry camera, shaking camera. Deformation, low-resolution, "
    "blurry, ugly, distortion.";

inline constexpr std::string_view kNegativeInstruction =
    "You write negative prompts for a video generation model. Given a refined prompt, list the "
    "defects the generated video must avoid: antonyms of its positive modifiers and negative "
    "descriptions of the subject or overall video characteristics. Answer with comma-separated "
    "descriptors only. Never restate the content of the refined prompt.";

inline constexpr std::string_view kNegativePositiveLabel = "Refined prompt: ";
inline constexpr std::string_view kNegativeNegativeLabel = "Negative prompt: ";

inline constexpr std::string_view kAdaptiveExamplePositive =
    "As the sun gently peeks through the vibrant window curtains, I sit comfortably in my plush, "
    "velvety chair, surrounded by an array of artfully arranged cosmetics. I begin by applying a "
    "lightweight, radiant foundation, seamlessly blending it into my skin with a fluffy brush. Next, I "
    "define my eyes with a rich, earthy eyeshadow, gradually building the palette with a pop of "
    "shimmering champagne on the lid. A swipe of deep, berry-stained lipstick completes my morning "
    "glow. I finish with a quick mist of hydrating toner and a light dusting of translucent powder, "
    "leaving my complexion fresh and flawless. The video captures my calm and focused routine, "
    "highlighting the beauty in the simplicity of a morning makeup ritual, as the natural light "
    "dancing through the room highlights the subtle, yet elegant enhancement of my daily beauty "
    "regimen.";

inline constexpr std::string_view kAdaptiveExampleNegative =
    "The video is not of a high quality, it has a low resolution. Strange motion trajectory. bad "
    "hands, missing fingers. deformation, distortion. Dark and unclear, blur, ugly, watermark, "
    "static. The person has bad anatomy, bad eyes, bad teeth, long and strange neck, bad hands, text, "
    "error, ugly appearance, deformed body, poorly drawn face, long body. The makeup is poorly "
    "applied, with uneven lines and clashing colors. The lip color is tacky and over-saturated, and "
    "the toner makes the skin look dull and oily. The camera work is shaky and poorly framed, with "
    "harsh lighting that accentuates imperfections.";

}  // namespace pav::templates
