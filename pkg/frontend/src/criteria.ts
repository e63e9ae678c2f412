// Per-subtask question wording and answering criteria shown above the
// candidate cards. The meme-caption block is the survey's canonical wording;
// the other subtasks follow the same two-line accuracy/relevance style.

export interface SubtaskCriteria {
  label: string;
  explanation: string;
  criteria: string[];
}

export const SUBTASK_CRITERIA: Record<string, SubtaskCriteria> = {
  meme_caption: {
    label: "Meme caption",
    explanation: "A meme caption explains the humor of a meme.",
    criteria: [
      "Accuracy: Does the caption convey the humor correctly?",
      "Relevance: Is the caption fully related to the humor?",
    ],
  },
  image_caption: {
    label: "Image caption",
    explanation: "An image caption literally describes the visual content.",
    criteria: [
      "Accuracy: Does the caption describe what is actually shown?",
      "Coverage: Does it mention the main visual content?",
    ],
  },
  embedded_text: {
    label: "Embedded text",
    explanation: "The embedded text is the text written on the meme image itself.",
    criteria: [
      "Accuracy: Is the text transcribed exactly as it appears?",
      "Completeness: Is any visible text missing?",
    ],
  },
  literary_devices: {
    label: "Literary devices",
    explanation: "Literary devices are the figurative-language categories the meme uses.",
    criteria: [
      "Accuracy: Do the chosen devices actually apply to the meme?",
      "Select one or multiple answers; pick None if nothing fits.",
    ],
  },
  emotions: {
    label: "Emotions",
    explanation: "The emotion words that best match what the meme conveys.",
    criteria: [
      "Accuracy: Do the chosen emotions match the meme's tone?",
      "Select one or multiple answers; pick None if nothing fits.",
    ],
  },
};

export function criteriaFor(subtask: string): SubtaskCriteria {
  return (
    SUBTASK_CRITERIA[subtask] ?? {
      label: subtask,
      explanation: "",
      criteria: [],
    }
  );
}
