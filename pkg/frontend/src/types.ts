export interface Message {
  turn: number;
  speaker: "patient" | "student" | "radiologist" | string;
  addressee: "doctor" | "examiner" | "broadcast" | string;
  content: string;
  terminal: boolean;
}

export interface CaseSummary {
  patient_id: string;
  department: string;
  chief_complaint: string;
}

export interface SessionDoc {
  session_id: string;
  scenario: string;
  patient_id: string;
  language: string;
  phase: string;
  closed: boolean;
  turns: number;
  messages?: Message[];
}

export interface MessageReply {
  messages: Message[];
  terminal: boolean;
  phase: string;
}

export interface KnowledgeCard {
  definition: string[];
  pathogenesis: string[];
  main_symptoms: string[];
  auxiliary_exam_methods: string[];
  treatment_plans: string[];
}

export interface RecallItem {
  disease: string;
  card: KnowledgeCard;
  patient_id: string;
  suggestions: string;
  score: number;
}

export interface Assessment {
  report: Record<string, string[] | boolean>;
  suggestions: Record<string, string>;
  scores: Record<string, number>;
  avg: number;
  phase: string;
}
