/** Wire-level types mirroring the warehouse API payloads. */

export type ValueType = "NON_NEGATIVE_INTEGER" | "DECIMAL" | "PERCENT";
export type Aggregation = "SUM" | "AVERAGE";
export type Role =
  | "ENUMERATOR_PIC"
  | "SUBOFFICE_MANAGER"
  | "DEPARTMENT_MANAGER"
  | "ADMIN";
export type Status =
  | "DRAFT"
  | "SUBMITTED"
  | "VERIFIED"
  | "VALIDATED"
  | "PUBLISHED"
  | "REJECTED";
export type ReviewAction = "VERIFY" | "VALIDATE" | "REJECT" | "PUBLISH";

export interface OrgUnitMeta {
  id: string;
  name: string;
  level: number;
  parent_id: string | null;
}

export interface ElementMeta {
  id: string;
  name: string;
  value_type: ValueType;
  range: [number, number] | null;
  owner_program_id: string;
  aggregation: Aggregation;
}

export interface DatasetMeta {
  id: string;
  name: string;
  period_type: "MONTH" | "QUARTER" | "YEAR";
  element_ids: string[];
  entry_level: number;
  deadline_days: number;
  program_id: string;
}

export interface IndicatorMeta {
  id: string;
  name: string;
  numerator_element_id: string;
  denominator_element_id: string;
  factor: number;
  spm_category: string;
}

export interface MetadataDoc {
  orgUnits: OrgUnitMeta[];
  programs: { id: string; name: string }[];
  dataElements: ElementMeta[];
  dataSets: DatasetMeta[];
  indicators: IndicatorMeta[];
  users: { id: string; name: string; role: Role }[];
}

export interface Finding {
  dimension: "CURRENT" | "CORRECT" | "CONSISTENT" | "COMPLETE";
  severity: "BLOCK" | "FLAG";
  subject: [string, string, string];
  message: string;
  requires_justification: boolean;
}

export interface SubmissionResult {
  dataset_id: string;
  org_unit_id: string;
  period: string;
  versions: Record<string, number>;
  findings: Finding[];
}

export interface TransitionPayload {
  dataset_id: string;
  org_unit_id: string;
  period: string;
  from_status: Status | null;
  to_status: Status;
  action: string;
  actor: string;
  at: string;
  reason: string | null;
}

export interface AnalyticsTablePayload {
  rows: "ORG_UNIT" | "PERIOD" | "ELEMENT" | "INDICATOR";
  columns: "ORG_UNIT" | "PERIOD" | "ELEMENT" | "INDICATOR";
  row_keys: string[];
  column_keys: string[];
  cells: (number | null)[][];
  min_status: Status;
  floor_forced: boolean;
}

export interface ChangeValue {
  value: number;
  version: number;
  status: Status;
  justification: string | null;
  deviation_flagged: boolean;
}

export interface ChangeEvent {
  server_seq: number;
  kind: string;
  dataset_id: string;
  org_unit_id: string;
  period: string;
  revision: number;
  status: Status;
  values: Record<string, ChangeValue>;
}

export interface SyncAck {
  client_id: string;
  client_seq: number;
  result: "APPLIED" | "DUPLICATE" | "CONFLICT";
  ticket_id: string | null;
}

export interface SubmitPayload {
  kind: "submit";
  dataset_id: string;
  org_unit_id: string;
  period: string;
  values: Record<string, number | { value: number; justification?: string }>;
  actor: string;
  submitted_at: string;
}

export interface ReviewPayload {
  kind: "review";
  dataset_id: string;
  org_unit_id: string;
  period: string;
  action: ReviewAction;
  actor: string;
  at: string;
  reason: string | null;
  justifications: Record<string, string>;
}

export interface WireRecord {
  client_id: string;
  client_seq: number;
  payload: SubmitPayload | ReviewPayload;
  base_version: number;
}

export interface ApiErrorBody {
  code: string;
  http_status: number;
  message: string;
  details: Record<string, unknown> & { findings?: Finding[] };
}

export interface ScorecardRow {
  org_unit_id: string;
  org_unit_name: string;
  timeliness: "OK" | "LATE" | "MISSING";
  correct_violations: number;
  consistency_flags: number;
  unjustified_flags: number;
  completeness: number;
  rules_violated: number;
  rules_unevaluated: number;
}
