package com.acme.models;

import java.time.Instant;

/** Shared domain model for an order as persisted by the backend services. */
public class OrderModel {
    private String id;
    private String customer;
    private int quantity;
    private String status;
    private Instant createdAt;

    public String getId() {
        return id;
    }

    public String getStatus() {
        return status;
    }

    public void setStatus(String status) {
        this.status = status;
    }
}
