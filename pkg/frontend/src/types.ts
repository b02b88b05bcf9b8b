/** JSON contracts of the summarization service. */

export interface HealthResponse {
  status: string;
  version: string;
}

export interface AddDocumentResponse {
  doc_id: string;
  num_sentences: number;
}

export interface MatrixResponse {
  n: number;
  /** Row-major post-mask influence scores, length n*n. */
  cells: number[];
  terms: {
    info: number[]; // per row sentence, length n
    rel: number[]; // per row sentence, length n
    nov: number[]; // row-major, length n*n
  };
  /** Post-mask centrality per sentence, length n. */
  centrality: number[];
  sentences: string[];
}

export interface ExtractResult {
  id: string;
  indices: number[];
  sentences: string[];
  scores: number[];
}

export interface AbstractResult {
  id: string;
  summary: string;
  p_gen_mean: number;
}

export type Mode = "extract" | "abstract";

export interface SummarizeRequest {
  doc_id: string;
  mode: Mode;
  k?: number;
  eps_n?: number;
  eps_r?: number;
  beam?: number;
  max_len?: number;
}
