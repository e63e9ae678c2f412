// Payload shapes of the review-service API. These are the *blinded* views:
// by design there is no field anywhere that could carry a candidate's model
// or context condition, and the renderers only ever read these fields.

export interface Candidate {
  candidate_id: string;
  text: string;
}

export interface SurveyItem {
  item_id: string;
  meme_id: string;
  subtask: string;
  selection_mode: "single" | "multi";
  candidates: Candidate[];
  allow_none: boolean;
}

export interface Progress {
  answered: number;
  total: number;
}

export interface NextItemResponse {
  done: boolean;
  item?: SurveyItem | null;
  progress: Progress;
}

export interface VoteRequest {
  evaluator_id: string;
  item_id: string;
  selected: string[];
}

export interface QueueEntry {
  key: string;
  instance_id: string;
  template_id: string;
  stage1_method: string;
  stage1_score: number;
  stage2_score: number | null;
  status: string;
}

export interface TallyResponse {
  subtasks: string[];
  cells: Record<string, Record<string, number>>;
  abstentions: number;
  grand_total: number;
}

export const NONE_CANDIDATE_ID = "none";
