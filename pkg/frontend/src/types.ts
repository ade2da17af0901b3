/** Wire types mirroring the service responses exactly. */

export interface CardItem {
  item_id: number;
  sub_category: string;
  color_tag: string | null;
}

export interface FeedCard {
  ootd_id: string;
  uploader_id: string;
  hashtags: string[];
  image_ref: string;
  items: CardItem[];
  score: number;
  source: string;
}

export interface FeedResponse {
  snapshot_version: number;
  user_id: string;
  results: FeedCard[];
}

export interface SimilarProduct {
  item_id: number;
  score: number;
  sub_category: string;
  color_tag: string | null;
}

export interface OotdDetailResponse {
  snapshot_version: number;
  ootd: FeedCard;
  similar_products: Record<string, SimilarProduct[]>;
}

export interface SimilarOotdsResponse {
  snapshot_version: number;
  ootd_id: string;
  results: FeedCard[];
}

export interface LeaderEntry {
  user_id: string;
  score: number;
  source: string;
}

export interface LeadersResponse {
  snapshot_version: number;
  user_id: string;
  results: LeaderEntry[];
}

export interface InteractionAck {
  recorded: boolean;
  snapshot_version: number;
}

export type InteractionKind = "view" | "like" | "follow";
