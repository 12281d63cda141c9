/** Wire types for the annotation service endpoints. */

export interface BoxRecord {
  kind: "face" | "body";
  index: number;
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  score: number;
  char_index: number;
}

export interface InstanceRecord {
  instance_uuid: string;
  char_index: number;
  series_id: string;
  page_id: string;
  panel_id: string;
  face: BoxRecord | null;
  body: BoxRecord | null;
}

/** Speech bubble boxes arrive as bare [x0, y0, x1, y1] quadruples. */
export type BubbleBox = [number, number, number, number];

export interface PanelPayload {
  page_id: string;
  panel_id: string;
  instances: InstanceRecord[];
  speech_bubbles: BubbleBox[];
}

export interface AnnotationGroup {
  identity_id: string;
  member_uuids: string[];
}

export interface SequenceSummary {
  sequence_id: string;
  series_id: string;
  n_panels: number;
  n_instances: number;
  n_identities: number;
  revision: number;
}

export interface SequenceListPage {
  sequences: SequenceSummary[];
  next_cursor: number | null;
  total: number;
}

export type AnnotationMode = "single_character" | "multiple_character";

export interface SequenceDetail {
  sequence_id: string;
  series_id: string;
  revision: number;
  mode: AnnotationMode | null;
  panels: PanelPayload[];
  annotations: AnnotationGroup[];
  /** Present only when the service has a model configured: uuid -> cluster label. */
  suggestions?: Record<string, number>;
}

export interface CommitRequest {
  member_uuids: string[];
  expected_revision: number;
  mode: AnnotationMode;
  reassign: boolean;
}

export interface CommitAccepted {
  sequence_id: string;
  revision: number;
  identity_id: string;
}
